"""Variational autoencoder with a Gaussian encoder and a deterministic decoder."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDivergedError
from ..nn import DenseNet, OptimizerState, backward, forward, minibatches, mse_loss, net_init, optim_step, predict
from ..rng import RngSeed


def kl_standard_normal(mu, logvar):
    """Mean over the batch of KL(N(mu, exp(logvar)) || N(0, I)) and its gradients."""
    mu = np.atleast_2d(mu)
    logvar = np.atleast_2d(logvar)
    b = len(mu)
    ev = np.exp(logvar)
    kl = 0.5 * np.sum(mu * mu + ev - 1.0 - logvar) / b
    return float(kl), mu / b, 0.5 * (ev - 1.0) / b


def elbo_loss_and_grads(encoder: DenseNet, decoder: DenseNet, x, eps, beta: float):
    """Reconstruction MSE + ``beta`` * KL for a fixed reparameterisation draw ``eps``.

    Returns ``(loss, recon, kl, enc_grads, dec_grads)``.
    """
    latent = decoder.in_dim
    h, enc_cache = forward(encoder, x)
    mu, logvar = h[:, :latent], h[:, latent:]
    std = np.exp(0.5 * logvar)
    z = mu + std * eps
    x_hat, dec_cache = forward(decoder, z)
    recon, g_xhat = mse_loss(x_hat, x)
    kl, g_mu_kl, g_lv_kl = kl_standard_normal(mu, logvar)
    dec_grads = backward(decoder, dec_cache, g_xhat)
    g_z = dec_grads.dx
    g_mu = g_z + beta * g_mu_kl
    g_lv = g_z * eps * 0.5 * std + beta * g_lv_kl
    enc_grads = backward(encoder, enc_cache, np.concatenate([g_mu, g_lv], axis=1))
    return recon + beta * kl, recon, kl, enc_grads, dec_grads


class VAEModel:
    family = "vae"

    def __init__(self, encoder: DenseNet, decoder: DenseNet, info: dict | None = None):
        self.encoder = encoder
        self.decoder = decoder
        self.info = info or {}

    @property
    def latent_dim(self):
        return self.decoder.in_dim

    def sample(self, n, sampler, rng):
        z = rng.standard_normal((n, self.latent_dim))
        return predict(self.decoder, z), sampler is not None

    def reconstruct(self, x):
        h = predict(self.encoder, x)
        return predict(self.decoder, h[:, : self.latent_dim])

    def to_dict(self):
        return {"encoder": self.encoder.to_dict(), "decoder": self.decoder.to_dict(), "info": self.info}

    @classmethod
    def from_dict(cls, d):
        return cls(DenseNet.from_dict(d["encoder"]), DenseNet.from_dict(d["decoder"]), d.get("info"))


def fit_vae(X, cfg, seed: RngSeed) -> VAEModel:
    X = np.asarray(X, dtype=np.float64)
    dim = X.shape[1]
    latent = cfg.vae.latent_dim
    hidden = [(w, "relu") for w in cfg.hidden]
    encoder = net_init(dim, hidden + [(2 * latent, "identity")], seed.child("enc"))
    decoder = net_init(latent, hidden + [(dim, "identity")], seed.child("dec"))
    opt_e = OptimizerState.for_net(encoder, "adam", cfg.lr)
    opt_d = OptimizerState.for_net(decoder, "adam", cfg.lr)
    rng = seed.child("train").generator()
    curve, recon_curve = [], []
    for _ in range(cfg.epochs_or(2000)):
        tot = rec = 0.0
        for idx in minibatches(len(X), cfg.batch_size, rng):
            eps = rng.standard_normal((len(idx), latent))
            loss, recon, _, ge, gd = elbo_loss_and_grads(encoder, decoder, X[idx], eps, cfg.vae.beta)
            if not np.isfinite(loss):
                raise TrainingDivergedError("VAE loss is not finite")
            optim_step(encoder, ge, opt_e)
            optim_step(decoder, gd, opt_d)
            tot += loss * len(idx)
            rec += recon * len(idx)
        curve.append(tot / len(X))
        recon_curve.append(rec / len(X))
    return VAEModel(encoder, decoder, {"loss_curve": curve, "recon_curve": recon_curve})
