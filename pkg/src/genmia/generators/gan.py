"""Small GAN: MLP generator z -> x and MLP discriminator x -> (0, 1)."""

from __future__ import annotations

import logging

import numpy as np

from ..errors import TrainingDivergedError
from ..nn import DenseNet, OptimizerState, backward, bce_loss, forward, minibatches, net_init, optim_step, predict
from ..rng import RngSeed

log = logging.getLogger(__name__)

COLLAPSE_LOSS = 1e-3
COLLAPSE_STEPS = 100


class GANModel:
    family = "gan"

    def __init__(self, generator: DenseNet, discriminator: DenseNet | None = None, info: dict | None = None):
        self.generator = generator
        self.discriminator = discriminator
        self.info = info or {}

    @property
    def latent_dim(self):
        return self.generator.in_dim

    def sample(self, n, sampler, rng):
        z = rng.standard_normal((n, self.latent_dim))
        return predict(self.generator, z), sampler is not None

    def to_dict(self):
        d = {"generator": self.generator.to_dict(), "info": self.info}
        if self.discriminator is not None:
            d["discriminator"] = self.discriminator.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        disc = DenseNet.from_dict(d["discriminator"]) if "discriminator" in d else None
        return cls(DenseNet.from_dict(d["generator"]), disc, d.get("info"))


def init_generator(dim, cfg, seed: RngSeed) -> DenseNet:
    arch = [(w, "relu") for w in cfg.hidden] + [(dim, "identity")]
    return net_init(cfg.gan.latent_dim, arch, seed, zero_last=cfg.gan.zero_init_output)


def fit_gan(X, cfg, seed: RngSeed) -> GANModel:
    """Alternate one discriminator and one generator Adam step per minibatch.

    The generator minimises the non-saturating loss -ln D(G(z)). A run where
    the discriminator loss stays below ``COLLAPSE_LOSS`` for ``COLLAPSE_STEPS``
    consecutive steps is flagged in ``info['mode_collapse_warning']``.
    """
    X = np.asarray(X, dtype=np.float64)
    dim = X.shape[1]
    latent = cfg.gan.latent_dim
    gen = init_generator(dim, cfg, seed.child("gen"))
    disc = net_init(dim, [(w, "relu") for w in cfg.gan.disc_hidden] + [(1, "sigmoid")], seed.child("disc"))
    b1 = cfg.gan.adam_beta1
    opt_g = OptimizerState.for_net(gen, "adam", cfg.lr, beta1=b1)
    opt_d = OptimizerState.for_net(disc, "adam", cfg.lr, beta1=b1)
    rng = seed.child("train").generator()
    d_curve, g_curve = [], []
    low_streak, collapse = 0, False
    for _ in range(cfg.epochs_or(2000)):
        d_tot = g_tot = 0.0
        for idx in minibatches(len(X), cfg.batch_size, rng):
            b = len(idx)
            real = X[idx]
            fake = predict(gen, rng.standard_normal((b, latent)))
            batch = np.concatenate([real, fake])
            labels = np.concatenate([np.ones(b), np.zeros(b)])[:, None]
            p, cache = forward(disc, batch)
            d_loss = 2.0 * bce_loss(p, labels)[0]
            gd = backward(disc, cache, (p - labels) / b, pre_activation=True)
            optim_step(disc, gd, opt_d)

            z = rng.standard_normal((b, latent))
            fake, g_cache = forward(gen, z)
            p, d_cache = forward(disc, fake)
            g_loss = bce_loss(p, np.ones_like(p))[0]
            dx = backward(disc, d_cache, (p - 1.0) / b, pre_activation=True).dx
            optim_step(gen, backward(gen, g_cache, dx), opt_g)

            if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
                raise TrainingDivergedError("GAN loss is not finite")
            low_streak = low_streak + 1 if d_loss < COLLAPSE_LOSS else 0
            if low_streak >= COLLAPSE_STEPS and not collapse:
                log.warning("discriminator loss collapsed; generator may have mode-collapsed")
                collapse = True
            d_tot += d_loss * b
            g_tot += g_loss * b
        d_curve.append(d_tot / len(X))
        g_curve.append(g_tot / len(X))
    info = {"loss_curve": g_curve, "disc_loss_curve": d_curve, "mode_collapse_warning": collapse}
    return GANModel(gen, disc, info)
