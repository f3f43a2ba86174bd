"""Toy target generators behind a query-only :class:`GeneratorHandle`.

Privileged accessors (:func:`privileged_density`, :func:`describe`,
:func:`training_info`) exist for validation and bookkeeping; attack code only
ever uses the handle's query methods.
"""

from __future__ import annotations

import json

from ..config import config_hash, from_dict, to_dict
from ..errors import ConfigError, UnsupportedDensityError
from ..rng import RngSeed, as_seed
from ..synthdata import Dataset, DistributionSpec
from .base import (
    Capability,
    Corruption,
    DDPMConfig,
    GANConfig,
    GMMConfig,
    GenTrainConfig,
    GeneratorHandle,
    ReconstructorConfig,
    Sampler,
    VAEConfig,
    fingerprint,
    make_handle_id,
    parse_sampler,
    sample_uncond,
    transform,
)
from .ddpm import DDPMModel, DiffusionSchedule, fit_ddpm, q_sample, reduced_timesteps
from .gan import GANModel, fit_gan
from .gmm import MixtureModel, SpecModel, fit_gmm_em
from .reconstructor import Corruptor, ReconstructorModel, fit_reconstructor
from .vae import VAEModel, elbo_loss_and_grads, fit_vae, kl_standard_normal

HANDLE_FORMAT_VERSION = 1

_MODELS = {
    "gmm": MixtureModel,
    "spec": SpecModel,
    "vae": VAEModel,
    "gan": GANModel,
    "ddpm": DDPMModel,
    "reconstructor": ReconstructorModel,
}


def _wrap(model, cfg, members: Dataset, seed: RngSeed, capability=None, extra=None) -> GeneratorHandle:
    hid = make_handle_id(model.family, config_hash([cfg, extra]), fingerprint(members.points), seed)
    model.train_config = cfg
    return GeneratorHandle(model, hid, capability or Capability("unconditional"), members.dim)


def _points(members: Dataset):
    if len(members) < 2:
        raise ConfigError("need at least 2 member points to train a generator")
    return members.points


def train_gmm_em(members: Dataset, k: int, iters: int, seed: RngSeed | int, min_var: float = 1e-3,
                 cfg: GenTrainConfig | None = None) -> GeneratorHandle:
    seed = as_seed(seed)
    cfg = cfg or GenTrainConfig("gmm", member_count=max(len(members), 2), gmm=GMMConfig(k, iters, min_var))
    spec, history, n_reinit = fit_gmm_em(_points(members), k, iters, seed, min_var)
    model = MixtureModel(spec, {"loss_curve": [-v for v in history], "loglik": history, "n_reinit": n_reinit})
    return _wrap(model, cfg, members, seed)


def train_vae(members: Dataset, cfg: GenTrainConfig, seed: RngSeed | int) -> GeneratorHandle:
    seed = as_seed(seed)
    return _wrap(fit_vae(_points(members), cfg, seed), cfg, members, seed)


def train_gan(members: Dataset, cfg: GenTrainConfig, seed: RngSeed | int) -> GeneratorHandle:
    seed = as_seed(seed)
    return _wrap(fit_gan(_points(members), cfg, seed), cfg, members, seed)


def train_ddpm(members: Dataset, cfg: GenTrainConfig, seed: RngSeed | int) -> GeneratorHandle:
    seed = as_seed(seed)
    return _wrap(fit_ddpm(_points(members), cfg, seed), cfg, members, seed)


def train_reconstructor(members: Dataset, cfg: GenTrainConfig, seed: RngSeed | int) -> GeneratorHandle:
    seed = as_seed(seed)
    model = fit_reconstructor(_points(members), cfg, seed)
    cap = Capability("conditional", cfg.reconstructor.corruption)
    return _wrap(model, cfg, members, seed, cap)


def spec_handle(spec: DistributionSpec, members: Dataset, seed: RngSeed | int = 0) -> GeneratorHandle:
    """A "generator" that samples exactly from ``spec`` (no-signal control)."""
    seed = as_seed(seed)
    cfg = GenTrainConfig("spec", member_count=max(len(members), 2))
    return _wrap(SpecModel(spec, {"loss_curve": []}), cfg, members, seed, extra=spec)


def train_generator(members: Dataset, cfg: GenTrainConfig, seed: RngSeed | int,
                    true_spec: DistributionSpec | None = None) -> GeneratorHandle:
    if cfg.family == "gmm":
        return train_gmm_em(members, cfg.gmm.k, cfg.gmm.iters, seed, cfg.gmm.min_var, cfg)
    if cfg.family == "vae":
        return train_vae(members, cfg, seed)
    if cfg.family == "gan":
        return train_gan(members, cfg, seed)
    if cfg.family == "ddpm":
        return train_ddpm(members, cfg, seed)
    if cfg.family == "reconstructor":
        return train_reconstructor(members, cfg, seed)
    if true_spec is None:
        raise ConfigError("family 'spec' needs the true member distribution")
    return spec_handle(true_spec, members, seed)


def privileged_density(handle: GeneratorHandle) -> DistributionSpec:
    """Fitted density of a mixture-family generator (validation only)."""
    model = handle._model
    if not isinstance(model, MixtureModel):
        raise UnsupportedDensityError("only mixture-family generators expose a density")
    return model.spec


def describe(handle: GeneratorHandle) -> str:
    """Family name of the generator behind ``handle``."""
    return handle._model.family


def training_info(handle: GeneratorHandle) -> dict:
    return dict(handle._model.info)


def handle_to_dict(handle: GeneratorHandle) -> dict:
    cap = handle.capability
    cfg = getattr(handle._model, "train_config", None)
    return {
        "format_version": HANDLE_FORMAT_VERSION,
        "family": handle._model.family,
        "id": handle.id,
        "dim": handle.dim,
        "capability": {"kind": cap.kind, "corruption": to_dict(cap.corruption) if cap.corruption else None},
        "config": to_dict(cfg) if cfg is not None else None,
        "config_hash": config_hash(cfg) if cfg is not None else None,
        "model": handle._model.to_dict(),
    }


def handle_from_dict(doc: dict) -> GeneratorHandle:
    if doc.get("format_version") != HANDLE_FORMAT_VERSION:
        raise ValueError(f"unsupported generator format_version {doc.get('format_version')!r}")
    family = doc["family"]
    model = _MODELS[family].from_dict(doc["model"])
    cap = doc["capability"]
    corruption = from_dict(Corruption, cap["corruption"]) if cap["corruption"] else None
    handle = GeneratorHandle(model, doc["id"], Capability(cap["kind"], corruption), doc["dim"])
    if doc.get("config") is not None and family != "spec":
        model.train_config = from_dict(GenTrainConfig, doc["config"])
    return handle


def dumps(handle: GeneratorHandle) -> str:
    return json.dumps(handle_to_dict(handle), allow_nan=False, sort_keys=True)


def loads(text: str) -> GeneratorHandle:
    return handle_from_dict(json.loads(text))


__all__ = [
    "Capability", "Corruption", "Corruptor", "DDPMConfig", "DDPMModel", "DiffusionSchedule",
    "GANConfig", "GANModel", "GMMConfig", "GenTrainConfig", "GeneratorHandle", "MixtureModel",
    "ReconstructorConfig", "ReconstructorModel", "Sampler", "SpecModel", "VAEConfig", "VAEModel",
    "describe", "dumps", "elbo_loss_and_grads", "fit_gmm_em", "handle_from_dict", "handle_to_dict",
    "kl_standard_normal", "loads", "parse_sampler", "privileged_density", "q_sample",
    "reduced_timesteps", "sample_uncond", "spec_handle", "train_ddpm", "train_gan",
    "train_generator", "train_gmm_em", "train_reconstructor", "train_vae", "training_info",
    "transform",
]
