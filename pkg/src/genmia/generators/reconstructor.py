"""Conditional reconstructors: learn corrupt(x) -> x on member points.

Analogues of super resolution (subsample), inpainting (mask), denoising
(add_noise) and artifact reduction (quantize).
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import TrainingDivergedError
from ..nn import DenseNet, OptimizerState, backward, forward, minibatches, mse_loss, net_init, optim_step, predict
from ..rng import RngSeed
from .base import Corruption


class Corruptor:
    """A corruption with its per-model state fixed at training time."""

    def __init__(self, corruption: Corruption, dim: int, mask_idx=None, lo=None, hi=None):
        self.corruption = corruption
        self.dim = dim
        self.mask_idx = None if mask_idx is None else np.asarray(mask_idx, dtype=np.int64)
        self.lo = None if lo is None else np.asarray(lo, dtype=np.float64)
        self.hi = None if hi is None else np.asarray(hi, dtype=np.float64)

    @classmethod
    def fit(cls, corruption: Corruption, X, seed: RngSeed):
        dim = X.shape[1]
        mask_idx = lo = hi = None
        if corruption.kind == "mask":
            size = math.ceil(corruption.value * dim - 1e-9)
            mask_idx = np.sort(seed.generator().choice(dim, size=size, replace=False))
        elif corruption.kind == "quantize":
            lo, hi = X.min(axis=0), X.max(axis=0)
        return cls(corruption, dim, mask_idx, lo, hi)

    def levels(self, coord: int) -> np.ndarray:
        L = int(self.corruption.value)
        return self.lo[coord] + (self.hi[coord] - self.lo[coord]) * np.arange(L) / (L - 1)

    def apply(self, X, rng: np.random.Generator):
        X = np.array(X, dtype=np.float64)
        kind, value = self.corruption.kind, self.corruption.value
        if kind == "mask":
            X[:, self.mask_idx] = 0.0
        elif kind == "subsample":
            keep = np.arange(0, self.dim, int(value))
            grid = np.arange(self.dim)
            X = np.stack([np.interp(grid, keep, row[keep]) for row in X]) if len(X) else X
        elif kind == "add_noise":
            if value > 0:
                X = X + value * rng.standard_normal(X.shape)
        else:
            L = int(value)
            width = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
            q = np.clip(np.round((X - self.lo) / width * (L - 1)), 0, L - 1)
            X = self.lo + q * width / (L - 1)
        return X

    def to_dict(self):
        d = {"kind": self.corruption.kind, "value": self.corruption.value, "dim": self.dim}
        if self.mask_idx is not None:
            d["mask_idx"] = self.mask_idx.tolist()
        if self.lo is not None:
            d["lo"], d["hi"] = self.lo.tolist(), self.hi.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(Corruption(d["kind"], d["value"]), d["dim"], d.get("mask_idx"), d.get("lo"), d.get("hi"))


class ReconstructorModel:
    family = "reconstructor"

    def __init__(self, net: DenseNet, corruptor: Corruptor, info: dict | None = None):
        self.net = net
        self.corruptor = corruptor
        self.info = info or {}

    def transform(self, points):
        return predict(self.net, points)

    def sample(self, n, sampler, rng):
        raise TypeError("reconstructors are conditional")

    def to_dict(self):
        return {"net": self.net.to_dict(), "corruptor": self.corruptor.to_dict(), "info": self.info}

    @classmethod
    def from_dict(cls, d):
        return cls(DenseNet.from_dict(d["net"]), Corruptor.from_dict(d["corruptor"]), d.get("info"))


def fit_reconstructor(X, cfg, seed: RngSeed) -> ReconstructorModel:
    """Train by MSE on (corrupt(x), x); stochastic corruptions are redrawn every epoch."""
    X = np.asarray(X, dtype=np.float64)
    dim = X.shape[1]
    corruptor = Corruptor.fit(cfg.reconstructor.corruption, X, seed.child("corruptor"))
    arch = [(w, "relu") for w in cfg.hidden] + [(dim, "identity")]
    net = net_init(dim, arch, seed.child("init"))
    opt = OptimizerState.for_net(net, "adam", cfg.lr)
    rng = seed.child("train").generator()
    stochastic = corruptor.corruption.kind == "add_noise"
    corrupted = corruptor.apply(X, rng)
    curve = []
    for _ in range(cfg.epochs_or(1500)):
        if stochastic:
            corrupted = corruptor.apply(X, rng)
        tot = 0.0
        for idx in minibatches(len(X), cfg.batch_size, rng):
            pred, cache = forward(net, corrupted[idx])
            loss, g = mse_loss(pred, X[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError("reconstructor loss is not finite")
            optim_step(net, backward(net, cache, g), opt)
            tot += loss * len(idx)
        curve.append(tot / len(X))
    return ReconstructorModel(net, corruptor, {"loss_curve": curve})
