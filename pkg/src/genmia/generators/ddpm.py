"""Denoising diffusion model with ancestral, deterministic and reduced-step samplers."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, TrainingDivergedError
from ..nn import DenseNet, OptimizerState, backward, forward, minibatches, mse_loss, net_init, optim_step, predict
from ..rng import RngSeed


class DiffusionSchedule:
    """Linear-in-index beta schedule; ``alpha_bars[0] == 1`` by convention."""

    def __init__(self, betas):
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 2:
            raise ConfigError("diffusion needs at least 2 steps")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ConfigError("betas must lie strictly inside (0, 1)")
        self.betas = np.concatenate([[0.0], betas])  # 1-indexed
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)

    @property
    def T(self) -> int:
        return len(self.betas) - 1

    @classmethod
    def linear(cls, T: int, beta_start: float | None = None, beta_end: float | None = None):
        """Linear betas; unset endpoints use the 1e-4..0.02 range rescaled to ``T`` steps."""
        if T < 2:
            raise ConfigError("diffusion needs T >= 2")
        scale = 1000.0 / T
        start = min(1e-4 * scale, 0.1) if beta_start is None else beta_start
        end = min(0.02 * scale, 0.5) if beta_end is None else beta_end
        return cls(np.linspace(start, end, T))


def q_sample(schedule: DiffusionSchedule, x0, t, eps):
    """Forward noising x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    ab = np.asarray(schedule.alpha_bars[t], dtype=np.float64)
    if ab.ndim == 1:
        ab = ab[:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def time_embedding(t, T: int, n_freq: int):
    s = (np.asarray(t, dtype=np.float64) / T)[:, None]
    feats = [s]
    for f in range(1, n_freq + 1):
        feats.append(np.sin(np.pi * f * s))
        feats.append(np.cos(np.pi * f * s))
    return np.concatenate(feats, axis=1)


def reduced_timesteps(T: int, S: int) -> np.ndarray:
    """Evenly spaced sub-schedule of ``S`` steps in 1..T, always including 1 and T."""
    if not 2 <= S <= T:
        raise ConfigError(f"reduced sampler needs 2 <= S <= T (T={T}), got S={S}")
    return np.unique(np.round(np.linspace(1, T, S)).astype(int))


class DDPMModel:
    family = "ddpm"

    def __init__(self, eps_net: DenseNet, schedule: DiffusionSchedule, n_freq: int, info: dict | None = None):
        self.eps_net = eps_net
        self.schedule = schedule
        self.n_freq = n_freq
        self.info = info or {}

    @property
    def dim(self):
        return self.eps_net.out_dim

    def predict_eps(self, x, t: int):
        emb = time_embedding(np.full(len(x), t), self.schedule.T, self.n_freq)
        return predict(self.eps_net, np.concatenate([x, emb], axis=1))

    def sample(self, n, sampler, rng):
        kind = "ancestral" if sampler is None else sampler.kind
        x = rng.standard_normal((n, self.dim))
        T = self.schedule.T
        if kind == "ancestral":
            return self._ancestral(x, rng), False
        steps = np.arange(1, T + 1) if kind == "deterministic" else reduced_timesteps(T, sampler.steps)
        return self._deterministic(x, steps), False

    def _ancestral(self, x, rng):
        sch = self.schedule
        for t in range(sch.T, 0, -1):
            eps = self.predict_eps(x, t)
            ab, ab_prev = sch.alpha_bars[t], sch.alpha_bars[t - 1]
            mean = (x - sch.betas[t] / np.sqrt(1.0 - ab) * eps) / np.sqrt(sch.alphas[t])
            if t > 1:
                var = sch.betas[t] * (1.0 - ab_prev) / (1.0 - ab)
                x = mean + np.sqrt(var) * rng.standard_normal(x.shape)
            else:
                x = mean
        return x

    def _deterministic(self, x, steps):
        """DDIM update with eta = 0 along ``steps`` (ascending), finishing at t = 0."""
        ab = self.schedule.alpha_bars
        seq = list(steps[::-1]) + [0]
        for t, s in zip(seq[:-1], seq[1:]):
            eps = self.predict_eps(x, t)
            x0 = (x - np.sqrt(1.0 - ab[t]) * eps) / np.sqrt(ab[t])
            x = np.sqrt(ab[s]) * x0 + np.sqrt(1.0 - ab[s]) * eps
        return x

    def to_dict(self):
        return {
            "eps_net": self.eps_net.to_dict(),
            "betas": self.schedule.betas[1:].tolist(),
            "time_features": self.n_freq,
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(DenseNet.from_dict(d["eps_net"]), DiffusionSchedule(d["betas"]), d["time_features"], d.get("info"))


def denoising_loss_and_grads(model: DDPMModel, x0, t, eps):
    xt = q_sample(model.schedule, x0, t, eps)
    inp = np.concatenate([xt, time_embedding(t, model.schedule.T, model.n_freq)], axis=1)
    pred, cache = forward(model.eps_net, inp)
    loss, g = mse_loss(pred, eps)
    return loss, backward(model.eps_net, cache, g)


def fit_ddpm(X, cfg, seed: RngSeed) -> DDPMModel:
    X = np.asarray(X, dtype=np.float64)
    dim = X.shape[1]
    dc = cfg.ddpm
    schedule = DiffusionSchedule.linear(dc.T, dc.beta_start, dc.beta_end)
    arch = [(w, "relu") for w in cfg.hidden] + [(dim, "identity")]
    net = net_init(dim + 1 + 2 * dc.time_features, arch, seed.child("init"))
    model = DDPMModel(net, schedule, dc.time_features)
    opt = OptimizerState.for_net(net, "adam", cfg.lr)
    rng = seed.child("train").generator()
    curve = []
    for _ in range(cfg.epochs_or(3000)):
        tot = 0.0
        for idx in minibatches(len(X), cfg.batch_size, rng):
            t = rng.integers(1, dc.T + 1, size=len(idx))
            eps = rng.standard_normal((len(idx), dim))
            loss, grads = denoising_loss_and_grads(model, X[idx], t, eps)
            if not np.isfinite(loss):
                raise TrainingDivergedError("diffusion loss is not finite")
            optim_step(net, grads, opt)
            tot += loss * len(idx)
        curve.append(tot / len(X))
    model.info = {"loss_curve": curve}
    return model
