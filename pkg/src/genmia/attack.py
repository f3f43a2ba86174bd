"""The membership inference attack itself.

Training positives are generator outputs, training negatives are auxiliary
points, and the attack model is a binary classifier between the two. Queries
are answered by the classifier alone; no generator access is needed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import config_hash, to_dict
from .errors import (
    ConfigError,
    EmptyRequestError,
    InsufficientDataError,
    MissingInputsError,
    ShapeError,
    TrainingDivergedError,
)
from .generators.base import GeneratorHandle
from .nn import DenseNet, OptimizerState, backward, bce_loss, forward, minibatches, net_init, optim_step, predict, sigmoid
from .rng import RngSeed, as_seed
from .synthdata import AuxSplit, Dataset, DistributionSpec, logpdf

MEMBER, NON_MEMBER = 1, 0
ORIGINS = ("generated", "aux_out", "shadow_generated")
_ORIGIN_LABEL = {"generated": MEMBER, "aux_out": NON_MEMBER, "shadow_generated": NON_MEMBER}
MAX_PER_CLASS = 5000
CLASSIFIER_FORMAT_VERSION = 1
_SCORE_LO = np.finfo(np.float64).tiny
_SCORE_HI = np.nextafter(1.0, 0.0)


@dataclass
class LabeledSet:
    """Points with membership labels and where each point came from."""

    points: np.ndarray
    labels: np.ndarray
    origins: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.origins = np.asarray(self.origins).astype(str)
        self.ids = np.asarray(self.ids).astype(str)
        n = len(self.points)
        if not (len(self.labels) == len(self.origins) == len(self.ids) == n):
            raise ShapeError("points, labels, origins and ids must have equal length")
        for origin in np.unique(self.origins):
            if origin not in _ORIGIN_LABEL:
                raise ValueError(f"unknown origin {origin!r}")
            if np.any(self.labels[self.origins == origin] != _ORIGIN_LABEL[origin]):
                raise ValueError(f"origin {origin!r} must always carry label {_ORIGIN_LABEL[origin]}")

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def counts(self) -> dict:
        return {MEMBER: int(np.sum(self.labels == MEMBER)), NON_MEMBER: int(np.sum(self.labels == NON_MEMBER))}

    @classmethod
    def from_dataset(cls, d: Dataset, origin: str) -> "LabeledSet":
        return cls(d.points, np.full(len(d), _ORIGIN_LABEL[origin]), np.full(len(d), origin), d.ids)

    def to_csv(self) -> str:
        cols = [f"point_{j}" for j in range(self.dim)] + ["label", "origin"]
        lines = [",".join(cols)]
        for p, y, o in zip(self.points, self.labels, self.origins):
            lines.append(",".join([repr(float(v)) for v in p] + [str(int(y)), o]))
        return "\n".join(lines) + "\n"


class AttackTrainSet(LabeledSet):
    """A label-balanced :class:`LabeledSet`."""

    def __post_init__(self):
        super().__post_init__()
        c = self.counts()
        if c[MEMBER] != c[NON_MEMBER]:
            raise ValueError(f"attack training set is unbalanced: {c}")

    @classmethod
    def combine(cls, positives: LabeledSet, negatives: LabeledSet) -> "AttackTrainSet":
        if positives.dim != negatives.dim:
            raise ShapeError("positives and negatives differ in dimension")
        return cls(
            np.concatenate([positives.points, negatives.points]),
            np.concatenate([positives.labels, negatives.labels]),
            np.concatenate([positives.origins, negatives.origins]),
            np.concatenate([positives.ids, negatives.ids]),
        )


def generated_positives(handle: GeneratorHandle, aux_in: Dataset | None, n: int, sampler, seed: RngSeed) -> LabeledSet:
    """Query the generator for ``n`` training positives.

    Unconditional generators are sampled from Gaussian noise; conditional ones
    receive ``n`` distinct auxiliary points after corruption.
    """
    if handle.conditional:
        if aux_in is None or len(aux_in) == 0:
            raise MissingInputsError("conditional generators need auxiliary query inputs")
        if len(aux_in) < n:
            raise InsufficientDataError(f"need {n} auxiliary query inputs, have {len(aux_in)}")
        pick = seed.child("pick").generator().permutation(len(aux_in))[:n]
        queries = handle.corrupt(aux_in.subset(pick), seed.child("corrupt"))
        return LabeledSet.from_dataset(handle.transform(queries), "generated")
    return LabeledSet.from_dataset(handle.sample_uncond(n, sampler, seed.child("sample")), "generated")


def sampled_negatives(aux_out: Dataset, n: int, seed: RngSeed) -> LabeledSet:
    if len(aux_out) < n:
        raise InsufficientDataError(f"need {n} auxiliary negatives, only {len(aux_out)} available")
    pick = seed.generator().permutation(len(aux_out))[:n]
    sel = aux_out.subset(pick)
    return LabeledSet.from_dataset(sel, "aux_out")


def _per_class(n_queries: int, max_per_class: int) -> int:
    if n_queries < 1:
        raise EmptyRequestError("n_queries must be at least 1")
    return min(int(n_queries), int(max_per_class))


def build_attack_trainset(
    handle: GeneratorHandle,
    aux: AuxSplit,
    n_queries: int,
    sampler=None,
    seed: RngSeed | int = 0,
    max_per_class: int = MAX_PER_CLASS,
) -> AttackTrainSet:
    """Generated positives and ``aux_out`` negatives, equal in number."""
    n = _per_class(n_queries, max_per_class)
    seed = as_seed(seed)
    negatives = sampled_negatives(aux.aux_out, n, seed.child("negatives"))
    positives = generated_positives(handle, aux.aux_in, n, sampler, seed.child("positives"))
    return AttackTrainSet.combine(positives, negatives)


def shadow_negative_set(shadow: GeneratorHandle, n: int, sampler=None, seed: RngSeed | int = 0) -> LabeledSet:
    """``n`` shadow-generated points, all labelled non-member."""
    if n < 1:
        raise EmptyRequestError("requested zero shadow negatives")
    ds = shadow.sample_uncond(n, sampler, as_seed(seed))
    return LabeledSet.from_dataset(ds, "shadow_generated")


def build_shadow_trainset(
    target: GeneratorHandle,
    shadow: GeneratorHandle,
    aux: AuxSplit,
    n_queries: int,
    sampler=None,
    shadow_sampler=None,
    seed: RngSeed | int = 0,
    max_per_class: int = MAX_PER_CLASS,
) -> AttackTrainSet:
    """Like :func:`build_attack_trainset` but negatives come from a shadow generator."""
    if shadow.id == target.id:
        raise ConfigError("the shadow generator must differ from the target generator")
    n = _per_class(n_queries, max_per_class)
    seed = as_seed(seed)
    positives = generated_positives(target, aux.aux_in, n, sampler, seed.child("positives"))
    negatives = shadow_negative_set(shadow, n, shadow_sampler, seed.child("shadow"))
    return AttackTrainSet.combine(positives, negatives)


@dataclass(frozen=True)
class AttackConfig:
    """Attack classifier hyperparameters.

    Training runs ``max(epochs, ceil(min_steps / batches_per_epoch))`` epochs so
    that small query budgets still get a useful number of updates.
    """

    widths: tuple[int, ...] = (64, 64)
    epochs: int = 30
    min_steps: int = 1500
    lr: float = 2e-3
    batch: int = 128
    threshold: float = 0.5

    def __post_init__(self):
        if not self.widths or any(w < 1 for w in self.widths):
            raise ConfigError("attack widths must be positive")
        if self.epochs < 1 or self.batch < 1 or self.lr <= 0 or self.min_steps < 0:
            raise ConfigError("attack epochs, batch and lr must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")


@dataclass
class AttackClassifier:
    net: DenseNet
    mean: np.ndarray
    scale: np.ndarray
    threshold: float = 0.5
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.net.in_dim

    def logits(self, points) -> np.ndarray:
        """Pre-sigmoid scores; rank-equivalent to :meth:`scores` without saturation ties."""
        x = np.asarray(points, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeError(f"attack model expects points of dim {self.dim}, got shape {x.shape}")
        return predict(self.net, (x - self.mean) / self.scale, pre_activation=True)[:, 0]

    def scores(self, points) -> np.ndarray:
        """Membership probabilities, kept strictly inside (0, 1)."""
        return np.clip(sigmoid(self.logits(points)), _SCORE_LO, _SCORE_HI)

    def to_dict(self) -> dict:
        return {
            "format_version": CLASSIFIER_FORMAT_VERSION,
            "net": self.net.to_dict(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "threshold": self.threshold,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackClassifier":
        if d.get("format_version") != CLASSIFIER_FORMAT_VERSION:
            raise ValueError(f"unsupported classifier format_version {d.get('format_version')!r}")
        return cls(DenseNet.from_dict(d["net"]), np.array(d["mean"]), np.array(d["scale"]),
                   d["threshold"], d.get("meta", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "AttackClassifier":
        return cls.from_dict(json.loads(text))


def train_attack_model(ts: AttackTrainSet, cfg: AttackConfig = AttackConfig(), seed: RngSeed | int = 0) -> AttackClassifier:
    """Fit the binary attack model by minibatch Adam on cross-entropy."""
    if len(ts) == 0:
        raise EmptyRequestError("empty attack training set")
    AttackTrainSet(ts.points, ts.labels, ts.origins, ts.ids)  # re-check balance
    seed = as_seed(seed)
    X = ts.points
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    Z = (X - mean) / scale
    y = ts.labels.astype(np.float64)[:, None]
    arch = [(w, "relu") for w in cfg.widths] + [(1, "sigmoid")]
    net = net_init(ts.dim, arch, seed.child("init"))
    opt = OptimizerState.for_net(net, "adam", cfg.lr)
    rng = seed.child("shuffle").generator()
    per_epoch = math.ceil(len(Z) / cfg.batch)
    epochs = max(cfg.epochs, math.ceil(cfg.min_steps / per_epoch))
    final = float("nan")
    for _ in range(epochs):
        tot = 0.0
        for idx in minibatches(len(Z), cfg.batch, rng):
            p, cache = forward(net, Z[idx])
            loss, _ = bce_loss(p, y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError("attack model loss is not finite")
            optim_step(net, backward(net, cache, (p - y[idx]) / len(idx), pre_activation=True), opt)
            tot += loss * len(idx)
        final = tot / len(Z)
    meta = {"seed": seed.token(), "config_hash": config_hash(cfg), "epochs": epochs,
            "final_loss": final, "config": to_dict(cfg)}
    return AttackClassifier(net, mean, scale, cfg.threshold, meta)


@dataclass(frozen=True)
class QueryVerdict:
    score: float
    label: str  # "member" | "non-member"


def infer_membership(clf: AttackClassifier, queries: Dataset) -> list[QueryVerdict]:
    """Answer membership queries from the attack model alone."""
    scores = clf.scores(queries.points)
    return [verdict(float(s), clf.threshold) for s in scores]


def verdict(score: float, threshold: float = 0.5) -> QueryVerdict:
    return QueryVerdict(score, "member" if score >= threshold else "non-member")


def bayes_oracle_logratio(gen_density: DistributionSpec, aux_density: DistributionSpec, queries) -> np.ndarray:
    pts = queries.points if isinstance(queries, Dataset) else np.atleast_2d(queries)
    return np.atleast_1d(logpdf(gen_density, pts) - logpdf(aux_density, pts))


def bayes_oracle_scores(gen_density: DistributionSpec, aux_density: DistributionSpec, queries) -> np.ndarray:
    """sigma(log p_gen(x) - log p_aux(x)): the likelihood-ratio attack between known densities."""
    return sigmoid(bayes_oracle_logratio(gen_density, aux_density, queries))
