"""Diagonal Gaussian mixture fitted by EM, plus the true-distribution sampler."""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.special import logsumexp

from ..errors import InsufficientDataError
from ..rng import RngSeed, as_seed
from ..synthdata import DistributionSpec, gaussian_mixture, sample

log = logging.getLogger(__name__)


def _log_joint(X, weights, means, var):
    diff = X[:, None, :] - means[None]
    return (
        np.log(weights)[None]
        - 0.5 * np.sum(diff * diff / var[None], axis=2)
        - 0.5 * np.sum(np.log(var), axis=1)[None]
        - 0.5 * X.shape[1] * math.log(2.0 * math.pi)
    )


def kmeanspp_centers(X, k, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def fit_gmm_em(X, k: int, iters: int, seed: RngSeed | int, min_var: float = 1e-3):
    """Fit a ``k``-component diagonal mixture with EM.

    Returns ``(spec, loglik_history, n_reinit)``. ``loglik_history[i]`` is the
    total log-likelihood after ``i`` M-steps (entry 0 is the initialisation).
    Variances are floored at ``min_var``; that floor keeps each M-step a
    constrained maximiser, so the history stays non-decreasing.
    """
    X = np.asarray(X, dtype=np.float64)
    n, dim = X.shape
    if n < k:
        raise InsufficientDataError(f"need at least k={k} points, got {n}")
    rng = as_seed(seed).generator()
    global_var = np.maximum(X.var(axis=0), min_var)
    means = kmeanspp_centers(X, k, rng)
    var = np.tile(global_var, (k, 1))
    weights = np.full(k, 1.0 / k)

    history = []
    n_reinit = 0
    for it in range(iters + 1):
        log_joint = _log_joint(X, weights, means, var)
        lse = logsumexp(log_joint, axis=1)
        history.append(float(lse.sum()))
        if it == iters:
            break
        resp = np.exp(log_joint - lse[:, None])
        nk = resp.sum(axis=0)
        empty = nk < 1e-10 * n
        if np.any(empty):
            for j in np.flatnonzero(empty):
                log.info("EM component %d empty at iteration %d; reinitialising", j, it)
                n_reinit += 1
                resp[:, j] = 0.0
                resp[rng.integers(n), j] = 1.0
            nk = resp.sum(axis=0)
        weights = nk / nk.sum()
        means = (resp.T @ X) / nk[:, None]
        sq = (X[:, None, :] - means[None]) ** 2
        var = np.maximum(np.einsum("nk,nkd->kd", resp, sq) / nk[:, None], min_var)
    spec = gaussian_mixture(weights / weights.sum(), means, np.sqrt(var))
    return spec, history, n_reinit


class MixtureModel:
    family = "gmm"

    def __init__(self, spec: DistributionSpec, info: dict | None = None):
        self.spec = spec
        self.info = info or {}

    def sample(self, n, sampler, rng):
        return _draw(self.spec, n, rng), sampler is not None

    def to_dict(self):
        return {"spec": self.spec.to_dict(), "info": self.info}

    @classmethod
    def from_dict(cls, d):
        return cls(DistributionSpec.from_dict(d["spec"]), d.get("info"))


class SpecModel(MixtureModel):
    """Samples straight from a known distribution (the no-signal control)."""

    family = "spec"


def _draw(spec, n, rng):
    seed = RngSeed(int(rng.integers(0, 2**63)))
    return sample(spec, n, seed).points
