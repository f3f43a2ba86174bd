"""Synthetic point-cloud distributions standing in for real datasets.

A :class:`DistributionSpec` plays the role of a dataset's domain. Member and
auxiliary domains are related through :func:`make_pair`, whose ``shift`` knob
controls how similar the attacker's auxiliary data is to the members.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ConfigError,
    EmptyRequestError,
    InsufficientDataError,
    ShapeError,
    UnsupportedDensityError,
)
from .rng import RngSeed, as_seed

KINDS = ("gaussian_mixture", "two_moons", "ring")


@dataclass(frozen=True)
class DistributionSpec:
    kind: str
    dim: int
    weights: tuple = ()
    means: tuple = ()  # k x dim
    stds: tuple = ()  # k x dim, diagonal
    noise_std: float = 0.1
    offset: tuple = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown distribution kind {self.kind!r}")
        if not 1 <= int(self.dim) <= 64:
            raise ConfigError(f"dim must be a small positive integer, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        if self.kind == "gaussian_mixture":
            w = np.asarray(self.weights, dtype=np.float64)
            mu = np.asarray(self.means, dtype=np.float64).reshape(len(w), self.dim)
            sd = np.asarray(self.stds, dtype=np.float64).reshape(len(w), self.dim)
            if len(w) == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ConfigError("mixture weights must be a non-empty simplex vector")
            if np.any(sd <= 0) or not np.all(np.isfinite(sd)):
                raise ConfigError("mixture standard deviations must be positive")
            object.__setattr__(self, "weights", tuple(w.tolist()))
            object.__setattr__(self, "means", tuple(map(tuple, mu.tolist())))
            object.__setattr__(self, "stds", tuple(map(tuple, sd.tolist())))
        else:
            off = np.zeros(self.dim) if len(self.offset) == 0 else np.asarray(self.offset, float)
            if off.shape != (self.dim,):
                raise ConfigError(f"offset must have length {self.dim}")
            if self.noise_std < 0 or self.scale <= 0:
                raise ConfigError("noise_std must be >= 0 and scale > 0")
            if self.kind == "two_moons" and self.dim < 2:
                raise ConfigError("two_moons needs dim >= 2")
            object.__setattr__(self, "offset", tuple(off.tolist()))
            object.__setattr__(self, "noise_std", float(self.noise_std))
            object.__setattr__(self, "scale", float(self.scale))

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def weights_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    @property
    def means_array(self) -> np.ndarray:
        return np.asarray(self.means, dtype=np.float64).reshape(self.k, self.dim)

    @property
    def stds_array(self) -> np.ndarray:
        return np.asarray(self.stds, dtype=np.float64).reshape(self.k, self.dim)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "dim": self.dim}
        if self.kind == "gaussian_mixture":
            d.update(
                weights=list(self.weights),
                means=[list(m) for m in self.means],
                stds=[list(s) for s in self.stds],
            )
        else:
            d.update(noise_std=self.noise_std, offset=list(self.offset), scale=self.scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DistributionSpec":
        allowed = {"kind", "dim", "weights", "means", "stds", "noise_std", "offset", "scale"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown distribution keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("weights", "offset"):
            if key in d:
                d[key] = tuple(d[key])
        for key in ("means", "stds"):
            if key in d:
                d[key] = tuple(tuple(row) for row in d[key])
        return cls(**d)


def gaussian_mixture(weights, means, stds) -> DistributionSpec:
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    stds = np.broadcast_to(np.asarray(stds, dtype=np.float64), means.shape)
    return DistributionSpec(
        "gaussian_mixture", means.shape[1], tuple(weights), tuple(map(tuple, means)),
        tuple(map(tuple, stds)),
    )


@dataclass(frozen=True)
class Provenance:
    kind: str  # sampled | generated | mixed | subset | loaded
    source: str
    detail: tuple = ()


@dataclass
class Dataset:
    """Points plus a provenance record and per-point identifiers.

    ``ids`` are strings of the form ``"<source>:<index>"``; they survive
    splitting and mixing and back the index-disjointness audits.
    """

    points: np.ndarray
    provenance: Provenance
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ShapeError(f"dataset points must be 2-D, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("dataset contains non-finite points")
        self.points = pts
        if self.ids is None:
            self.ids = make_ids(self.provenance.source, len(pts))
        self.ids = np.asarray(self.ids)
        if len(self.ids) != len(pts):
            raise ShapeError("ids and points differ in length")

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, idx, source: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        prov = Provenance("subset", source or self.provenance.source, (self.provenance,))
        return Dataset(self.points[idx], prov, self.ids[idx])


def make_ids(source: str, n: int) -> np.ndarray:
    return np.array([f"{source}:{i}" for i in range(n)])


def concat(parts: Sequence[Dataset], source: str) -> Dataset:
    prov = Provenance("mixed", source, tuple(p.provenance for p in parts))
    return Dataset(
        np.concatenate([p.points for p in parts]), prov, np.concatenate([p.ids for p in parts])
    )


@dataclass(frozen=True)
class AuxSplit:
    aux_in: Dataset
    aux_out: Dataset

    def __post_init__(self):
        if set(self.aux_in.ids.tolist()) & set(self.aux_out.ids.tolist()):
            raise ValueError("aux_in and aux_out overlap")


@dataclass(frozen=True)
class DatasetPair:
    member_spec: DistributionSpec
    aux_spec: DistributionSpec
    shift: float

    def __post_init__(self):
        if self.member_spec.dim != self.aux_spec.dim:
            raise ConfigError("member and auxiliary specs differ in dimension")


def _unit_sphere(rng, n, dim):
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample(spec: DistributionSpec, n: int, seed: RngSeed | int, source: str | None = None) -> Dataset:
    """Draw ``n`` i.i.d. points from ``spec``."""
    if n < 1:
        raise EmptyRequestError("requested zero samples")
    seed = as_seed(seed)
    rng = seed.generator()
    dim = spec.dim
    if spec.kind == "gaussian_mixture":
        comp = rng.choice(spec.k, size=n, p=spec.weights_array)
        pts = spec.means_array[comp] + spec.stds_array[comp] * rng.standard_normal((n, dim))
    elif spec.kind == "ring":
        pts = spec.scale * _unit_sphere(rng, n, dim)
        if spec.noise_std > 0:
            pts = pts + spec.noise_std * rng.standard_normal((n, dim))
        pts = pts + np.asarray(spec.offset)
    else:
        t = rng.uniform(0.0, math.pi, size=n)
        upper = rng.random(n) < 0.5
        x = np.where(upper, np.cos(t), 1.0 - np.cos(t)) - 0.5
        y = np.where(upper, np.sin(t), 0.5 - np.sin(t)) - 0.25
        pts = np.zeros((n, dim))
        pts[:, 0], pts[:, 1] = x, y
        pts *= spec.scale
        if spec.noise_std > 0:
            pts = pts + spec.noise_std * rng.standard_normal((n, dim))
        pts = pts + np.asarray(spec.offset)
    src = source or f"sample[{spec.kind}@{seed.token()}]"
    return Dataset(pts, Provenance("sampled", src, (seed.token(),)))


def logpdf(spec: DistributionSpec, x) -> np.ndarray | float:
    """Log density of a diagonal Gaussian mixture at a point or a batch of points."""
    if spec.kind != "gaussian_mixture":
        raise UnsupportedDensityError(f"no closed-form density for kind {spec.kind!r}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != spec.dim:
        raise ShapeError(f"expected points of dim {spec.dim}, got {x.shape[1]}")
    mu, sd = spec.means_array, spec.stds_array
    z = (x[:, None, :] - mu[None]) / sd[None]
    log_comp = (
        np.log(spec.weights_array)[None]
        - 0.5 * np.sum(z * z, axis=2)
        - np.sum(np.log(sd), axis=1)[None]
        - 0.5 * spec.dim * math.log(2.0 * math.pi)
    )
    out = logsumexp(log_comp, axis=1)
    return float(out[0]) if single else out


def make_pair(base: DistributionSpec, shift: float, seed: RngSeed | int) -> DatasetPair:
    """Derive an auxiliary domain that is similar to, not equal to, ``base``.

    Means (or the offset) move by ``shift`` along one random unit direction and
    spreads are scaled by a random factor within 10%. ``shift == 0`` returns
    ``base`` unchanged.
    """
    if shift < 0:
        raise ConfigError("shift must be non-negative")
    if shift == 0:
        return DatasetPair(base, base, 0.0)
    rng = as_seed(seed).generator()
    direction = _unit_sphere(rng, 1, base.dim)[0]
    if base.kind == "gaussian_mixture":
        factor = rng.uniform(0.9, 1.1, size=(base.k, base.dim))
        aux = replace(
            base,
            means=tuple(map(tuple, base.means_array + shift * direction)),
            stds=tuple(map(tuple, base.stds_array * factor)),
        )
    else:
        factor = rng.uniform(0.9, 1.1)
        aux = replace(
            base,
            offset=tuple(np.asarray(base.offset) + shift * direction),
            noise_std=base.noise_std * factor,
        )
    return DatasetPair(base, aux, float(shift))


def mix_overlap(aux: Dataset, members: Dataset, ratio: float, seed: RngSeed | int) -> Dataset:
    """Replace a ``ratio`` fraction of ``aux`` with distinct member points."""
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"overlap ratio must lie in [0, 1], got {ratio}")
    if aux.dim != members.dim:
        raise ShapeError("aux and members differ in dimension")
    n_replace = int(math.floor(ratio * len(aux) + 1e-9))
    if n_replace > len(members):
        raise InsufficientDataError(
            f"need {n_replace} distinct members to mix, only {len(members)} available"
        )
    if n_replace == 0:
        return aux
    rng = as_seed(seed).generator()
    slots = rng.choice(len(aux), size=n_replace, replace=False)
    picks = rng.choice(len(members), size=n_replace, replace=False)
    pts, ids = aux.points.copy(), aux.ids.copy().astype(object)
    pts[slots] = members.points[picks]
    ids[slots] = members.ids[picks]
    prov = Provenance("mixed", aux.provenance.source, (aux.provenance, members.provenance, ratio))
    return Dataset(pts, prov, ids.astype(str))


def _part_sizes(n: int, fractions) -> list[int]:
    raw = np.asarray(fractions, dtype=np.float64) * n
    sizes = np.floor(raw + 1e-9).astype(int)
    remainder = n - sizes.sum()
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[:remainder]] += 1
    return sizes.tolist()


def split_disjoint(d: Dataset, fractions: Sequence[float], seed: RngSeed | int) -> list[Dataset]:
    """Randomly partition ``d`` into parts with the given size fractions."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.ndim != 1 or len(fr) == 0 or np.any(fr <= 0):
        raise ConfigError("fractions must be a non-empty list of positive numbers")
    if abs(fr.sum() - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {fr.sum()}")
    if len(d) < len(fr):
        raise InsufficientDataError(f"cannot split {len(d)} points into {len(fr)} parts")
    order = as_seed(seed).generator().permutation(len(d))
    parts, start = [], 0
    for size in _part_sizes(len(d), fr):
        parts.append(d.subset(order[start : start + size]))
        start += size
    return parts


def split_sizes(d: Dataset, sizes: Sequence[int], seed: RngSeed | int) -> list[Dataset]:
    """Partition by exact counts; parts of size 0 come back empty."""
    total = int(sum(sizes))
    if total > len(d):
        raise InsufficientDataError(f"requested {total} points from a pool of {len(d)}")
    order = as_seed(seed).generator().permutation(len(d))
    parts, start = [], 0
    for size in sizes:
        parts.append(d.subset(order[start : start + int(size)]))
        start += int(size)
    return parts


def to_csv(d: Dataset) -> str:
    buf = io.StringIO()
    buf.write(f"dim={d.dim}\n")
    for row in d.points:
        buf.write(",".join(format(v, ".17g") for v in row) + "\n")
    return buf.getvalue()


def from_csv(text: str, source: str = "csv") -> Dataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("dim="):
        raise ValueError("dataset CSV must start with a 'dim=<d>' header")
    dim = int(lines[0][4:])
    pts = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=np.float64)
    pts = pts.reshape(len(lines) - 1, dim)
    return Dataset(pts, Provenance("loaded", source))


def gaussian_kl(mu0, sd0, mu1, sd1) -> float:
    """KL(N0 || N1) for diagonal Gaussians."""
    mu0, sd0, mu1, sd1 = (np.asarray(a, dtype=np.float64) for a in (mu0, sd0, mu1, sd1))
    return float(
        np.sum(np.log(sd1 / sd0) + (sd0**2 + (mu0 - mu1) ** 2) / (2.0 * sd1**2) - 0.5)
    )
