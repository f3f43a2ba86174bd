"""Black-box generator handle, training configs and sampler selection."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError, EmptyRequestError, ShapeError
from ..rng import RngSeed, as_seed
from ..synthdata import Dataset, Provenance

FAMILIES = ("gmm", "vae", "gan", "ddpm", "reconstructor", "spec")
CORRUPTIONS = ("mask", "subsample", "add_noise", "quantize")


@dataclass(frozen=True)
class Corruption:
    """Corruption applied to a clean point before it is fed to a reconstructor.

    ``value`` is the mask fraction, subsample factor, noise sigma or number of
    quantisation levels, depending on ``kind``.
    """

    kind: str = "add_noise"
    value: float = 0.3

    def __post_init__(self):
        if self.kind not in CORRUPTIONS:
            raise ConfigError(f"unknown corruption {self.kind!r}; expected one of {CORRUPTIONS}")
        if self.kind == "mask" and not 0.0 <= self.value <= 1.0:
            raise ConfigError("mask fraction must lie in [0, 1]")
        if self.kind == "subsample" and (self.value < 1 or self.value != int(self.value)):
            raise ConfigError("subsample factor must be a positive integer")
        if self.kind == "add_noise" and self.value < 0:
            raise ConfigError("noise sigma must be non-negative")
        if self.kind == "quantize" and (self.value < 2 or self.value != int(self.value)):
            raise ConfigError("quantize needs an integer number of levels >= 2")

    @property
    def tag(self) -> str:
        v = int(self.value) if self.kind in ("subsample", "quantize") else self.value
        return f"{self.kind}({v})"


@dataclass(frozen=True)
class GMMConfig:
    k: int = 16
    iters: int = 100
    min_var: float = 1e-3


@dataclass(frozen=True)
class VAEConfig:
    latent_dim: int = 2
    beta: float = 0.05


@dataclass(frozen=True)
class GANConfig:
    latent_dim: int = 4
    disc_hidden: tuple[int, ...] = (64, 64)
    adam_beta1: float = 0.5
    zero_init_output: bool = False


@dataclass(frozen=True)
class DDPMConfig:
    T: int = 50
    beta_start: Optional[float] = None
    beta_end: Optional[float] = None
    time_features: int = 4


@dataclass(frozen=True)
class ReconstructorConfig:
    corruption: Corruption = field(default_factory=Corruption)


@dataclass(frozen=True)
class GenTrainConfig:
    """How to train one target generator.

    ``member_count`` and ``epochs`` are the overfitting knobs: few members and
    many passes make the generator memorise its training points. ``epochs``
    left as ``None`` picks the family default.
    """

    family: str = "gmm"
    member_count: int = 64
    epochs: Optional[int] = None
    hidden: tuple[int, ...] = (64, 64)
    lr: float = 1e-3
    batch_size: int = 64
    gmm: GMMConfig = field(default_factory=GMMConfig)
    vae: VAEConfig = field(default_factory=VAEConfig)
    gan: GANConfig = field(default_factory=GANConfig)
    ddpm: DDPMConfig = field(default_factory=DDPMConfig)
    reconstructor: ReconstructorConfig = field(default_factory=ReconstructorConfig)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown generator family {self.family!r}")
        if self.member_count < 2:
            raise ConfigError("member_count must be at least 2")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.lr <= 0 or self.batch_size < 1:
            raise ConfigError("learning rate and batch size must be positive")
        if any(w < 1 for w in self.hidden):
            raise ConfigError("hidden widths must be positive")
        if self.ddpm.T < 2:
            raise ConfigError("diffusion needs T >= 2")
        if self.gmm.k < 1 or self.gmm.iters < 1 or self.gmm.min_var <= 0:
            raise ConfigError("gmm.k, gmm.iters and gmm.min_var must be positive")
        if self.vae.latent_dim < 1 or self.gan.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.vae.beta < 0:
            raise ConfigError("vae.beta must be non-negative")

    def epochs_or(self, default: int) -> int:
        return default if self.epochs is None else self.epochs


_REDUCED = re.compile(r"^reduced[(:\s]*(\d+)\)?$")


@dataclass(frozen=True)
class Sampler:
    kind: str = "ancestral"  # ancestral | deterministic | reduced
    steps: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("ancestral", "deterministic", "reduced"):
            raise ConfigError(f"unknown sampler {self.kind!r}")
        if self.kind == "reduced" and (self.steps is None or self.steps < 2):
            raise ConfigError("reduced sampler needs steps >= 2")

    @property
    def tag(self) -> str:
        return f"reduced({self.steps})" if self.kind == "reduced" else self.kind


def parse_sampler(value) -> Optional[Sampler]:
    """Accept ``None``, a :class:`Sampler`, or strings like ``"reduced(10)"``."""
    if value is None or isinstance(value, Sampler):
        return value
    text = str(value).strip().lower()
    m = _REDUCED.match(text)
    if m:
        return Sampler("reduced", int(m.group(1)))
    return Sampler(text)


@dataclass(frozen=True)
class Capability:
    kind: str  # unconditional | conditional
    corruption: Optional[Corruption] = None


def fingerprint(points: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(points, dtype=np.float64).tobytes()).hexdigest()[:16]


def make_handle_id(family: str, cfg_hash: str, data_fp: str, seed: RngSeed) -> str:
    blob = f"{family}|{cfg_hash}|{data_fp}|{seed.token()}".encode()
    return hashlib.sha256(blob).hexdigest()[:20]


class GeneratorHandle:
    """Query-only access to a trained generator.

    Attackers may call :meth:`sample_uncond`, :meth:`transform` and
    :meth:`corrupt`. The wrapped model is stored privately; only functions in
    :mod:`genmia.generators` look inside.
    """

    __slots__ = ("id", "capability", "dim", "_model")

    def __init__(self, model, handle_id: str, capability: Capability, dim: int):
        self._model = model
        self.id = handle_id
        self.capability = capability
        self.dim = int(dim)

    def __repr__(self):
        return f"GeneratorHandle(id={self.id!r}, capability={self.capability.kind}, dim={self.dim})"

    @property
    def conditional(self) -> bool:
        return self.capability.kind == "conditional"

    def sample_uncond(self, n: int, sampler=None, seed: RngSeed | int = 0) -> Dataset:
        if self.conditional:
            raise ConfigError("conditional generators must be queried through transform()")
        if n < 1:
            raise EmptyRequestError("requested zero generated samples")
        sampler = parse_sampler(sampler)
        seed = as_seed(seed)
        pts, ignored = self._model.sample(int(n), sampler, seed.generator())
        detail = (("sampler", sampler.tag if sampler else None), ("seed", seed.token()))
        if ignored:
            detail += (("warning", "sampler_ignored"),)
        return Dataset(
            pts, Provenance("generated", f"gen[{self.id}]", detail), _gen_ids(self.id, seed, len(pts))
        )

    def corrupt(self, inputs: Dataset, seed: RngSeed | int = 0) -> Dataset:
        """Put clean points into this generator's expected input format."""
        if not self.conditional:
            raise ConfigError("unconditional generators take no inputs")
        self._check_dim(inputs)
        pts = self._model.corruptor.apply(inputs.points, as_seed(seed).generator())
        prov = Provenance("corrupted", inputs.provenance.source, (self.capability.corruption.tag,))
        return Dataset(pts, prov, inputs.ids)

    def transform(self, inputs: Dataset) -> Dataset:
        if not self.conditional:
            raise ConfigError("unconditional generators have no input-conditioned transform")
        self._check_dim(inputs)
        out = self._model.transform(inputs.points)
        prov = Provenance("generated", f"gen[{self.id}]", (("inputs", inputs.provenance.source),))
        return Dataset(out, prov, np.array([f"gen[{self.id}]<{i}" for i in inputs.ids]))

    def _check_dim(self, inputs: Dataset):
        if inputs.dim != self.dim:
            raise ShapeError(f"generator expects dim {self.dim}, got {inputs.dim}")


def _gen_ids(handle_id, seed, n):
    prefix = f"gen[{handle_id}]@{seed.token()}"
    return np.array([f"{prefix}:{i}" for i in range(n)])


def sample_uncond(handle: GeneratorHandle, n: int, sampler=None, seed: RngSeed | int = 0) -> Dataset:
    return handle.sample_uncond(n, sampler, seed)


def transform(handle: GeneratorHandle, inputs: Dataset) -> Dataset:
    return handle.transform(inputs)
