import numpy as np
import pytest

from genmia import generators as gens
from genmia.errors import ConfigError, EmptyRequestError, ShapeError
from genmia.generators import (
    Corruption,
    DDPMConfig,
    DiffusionSchedule,
    GANConfig,
    GenTrainConfig,
    ReconstructorConfig,
    VAEConfig,
    parse_sampler,
    q_sample,
    reduced_timesteps,
)
from genmia.generators.gan import init_generator
from genmia.generators.gmm import fit_gmm_em
from genmia.generators.reconstructor import Corruptor
from genmia.generators.vae import elbo_loss_and_grads, kl_standard_normal
from genmia.nn import net_init, predict
from genmia.rng import RngSeed
from genmia.synthdata import Dataset, Provenance, gaussian_mixture, sample

from _oracles import central_diff, rel_err

MIX = gaussian_mixture([0.5, 0.5], [[-1.0, 0.0], [1.0, 0.5]], 0.3)


def _members(n=64, spec=MIX, seed=0):
    return sample(spec, n, RngSeed(seed, "members"), source="members")


# --- mixture model -------------------------------------------------------


def test_em_loglik_is_non_decreasing_on_random_datasets():
    rng = np.random.default_rng(0)
    for trial in range(20):
        dim = int(rng.integers(1, 4))
        k_true = int(rng.integers(1, 5))
        spec = gaussian_mixture(np.full(k_true, 1 / k_true), rng.normal(0, 2, (k_true, dim)),
                                rng.uniform(0.1, 1.0, (k_true, dim)))
        X = sample(spec, int(rng.integers(30, 200)), trial).points
        _, hist, _ = fit_gmm_em(X, int(rng.integers(1, 6)), 50, trial)
        assert len(hist) == 51
        assert np.all(np.diff(hist) >= -1e-9 * np.maximum(1.0, np.abs(hist[1:])))


def test_em_k1_is_closed_form():
    X = _members(200).points
    spec, _, _ = fit_gmm_em(X, 1, 5, 0)
    np.testing.assert_allclose(spec.means_array[0], X.mean(axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(spec.stds_array[0] ** 2, X.var(axis=0), rtol=0, atol=1e-12)


def test_em_recovers_separated_clusters():
    spec = gaussian_mixture([0.5, 0.5], [[-5.0, -5.0], [5.0, 5.0]], 0.1)
    X = sample(spec, 400, 3).points
    fit, _, _ = fit_gmm_em(X, 2, 30, 1)
    means = fit.means_array[np.argsort(fit.means_array[:, 0])]
    lo, hi = X[X[:, 0] < 0].mean(axis=0), X[X[:, 0] > 0].mean(axis=0)
    assert np.all(np.abs(means[0] - lo) < 0.05) and np.all(np.abs(means[1] - hi) < 0.05)
    assert np.all(np.abs(means[0] + 5) < 0.05)


def test_em_reinitialises_empty_components(monkeypatch, caplog):
    import genmia.generators.gmm as gmm_mod

    real = gmm_mod.kmeanspp_centers

    def far_center(X, k, rng):
        centers = real(X, k, rng)
        centers[-1] = 1e6  # no responsibility survives, so the component empties
        return centers

    monkeypatch.setattr(gmm_mod, "kmeanspp_centers", far_center)
    X = _members(100).points
    with caplog.at_level("INFO", logger="genmia"):
        spec, hist, n_reinit = fit_gmm_em(X, 3, 20, 0)
    assert n_reinit >= 1
    assert "empty" in caplog.text
    assert np.all(np.abs(spec.means_array) < 10) and np.all(np.isfinite(hist))


def test_em_requires_enough_points():
    from genmia.errors import InsufficientDataError

    with pytest.raises(InsufficientDataError):
        fit_gmm_em(np.zeros((3, 2)), 4, 10, 0)


def test_gmm_handle_samples_fitted_mixture():
    h = gens.train_gmm_em(_members(), 4, 50, 0)
    out = h.sample_uncond(500, seed=1)
    assert out.points.shape == (500, 2)
    assert out.provenance.kind == "generated" and out.provenance.source == f"gen[{h.id}]"
    fitted = gens.privileged_density(h)
    assert fitted.k == 4 and gens.describe(h) == "gmm"


def test_sampler_argument_ignored_with_warning_for_non_diffusion():
    h = gens.train_gmm_em(_members(), 2, 5, 0)
    out = h.sample_uncond(5, "deterministic", seed=0)
    assert ("warning", "sampler_ignored") in out.provenance.detail
    assert ("warning", "sampler_ignored") not in h.sample_uncond(5, None, seed=0).provenance.detail


def test_zero_samples_is_an_error():
    h = gens.train_gmm_em(_members(), 2, 5, 0)
    with pytest.raises(EmptyRequestError):
        h.sample_uncond(0)


def test_density_only_for_mixture_families():
    from genmia.errors import UnsupportedDensityError

    h = gens.train_vae(_members(), GenTrainConfig("vae", epochs=2), 0)
    with pytest.raises(UnsupportedDensityError):
        gens.privileged_density(h)


# --- VAE ------------------------------------------------------------------


def test_kl_is_zero_at_standard_normal():
    kl, gmu, glv = kl_standard_normal(np.zeros((3, 2)), np.zeros((3, 2)))
    assert kl == 0.0 and np.all(gmu == 0) and np.all(glv == 0)


def test_elbo_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    enc = net_init(3, [(5, "tanh"), (4, "identity")], 1)
    dec = net_init(2, [(5, "tanh"), (3, "identity")], 2)
    x = rng.normal(size=(6, 3))
    eps = rng.normal(size=(6, 2))
    _, _, _, ge, gd = elbo_loss_and_grads(enc, dec, x, eps, 0.7)

    def loss():
        return elbo_loss_and_grads(enc, dec, x, eps, 0.7)[0]

    for net, grads in ((enc, ge), (dec, gd)):
        for p, g in zip(net.parameters(), grads.params()):
            assert rel_err(g, central_diff(loss, p)) < 1e-4


def test_vae_reconstruction_improves():
    tight = gaussian_mixture([1.0], [[0.5, -0.5]], 0.05)
    members = _members(64, tight)
    cfg = GenTrainConfig("vae", epochs=200)
    h = gens.train_vae(members, cfg, 0)
    curve = gens.training_info(h)["recon_curve"]
    assert curve[-1] < curve[0]
    out = h.sample_uncond(100, seed=2).points
    assert np.all(np.isfinite(out))


# --- GAN ------------------------------------------------------------------


def test_zero_init_generator_outputs_final_bias():
    cfg = GenTrainConfig("gan", gan=GANConfig(zero_init_output=True))
    g = init_generator(2, cfg, RngSeed(0))
    g.layers[-1].bias[...] = [0.25, -1.5]
    out = predict(g, np.random.default_rng(0).normal(size=(20, cfg.gan.latent_dim)))
    np.testing.assert_array_equal(out, np.tile([0.25, -1.5], (20, 1)))


def test_gan_learns_shifted_gaussian_mean():
    spec = gaussian_mixture([1.0], [[3.0, 3.0]], 0.5)
    h = gens.train_gan(_members(128, spec), GenTrainConfig("gan", member_count=128, epochs=300), 0)
    out = h.sample_uncond(2000, seed=1).points
    assert np.linalg.norm(out.mean(axis=0) - 3.0) < 1.0
    info = gens.training_info(h)
    assert isinstance(info["mode_collapse_warning"], bool)


def test_gan_is_deterministic():
    cfg = GenTrainConfig("gan", epochs=20)
    a = gens.train_gan(_members(), cfg, 4).sample_uncond(50, seed=9).points
    b = gens.train_gan(_members(), cfg, 4).sample_uncond(50, seed=9).points
    np.testing.assert_array_equal(a, b)


# --- diffusion ------------------------------------------------------------


def test_schedule_properties():
    sch = DiffusionSchedule.linear(50)
    assert sch.alpha_bars[0] == 1.0
    assert np.all(np.diff(sch.alpha_bars) < 0)
    np.testing.assert_allclose(sch.alpha_bars[1:], np.cumprod(1 - sch.betas[1:]))
    assert sch.alpha_bars[-1] < 0.01
    with pytest.raises(ConfigError):
        DiffusionSchedule.linear(1)
    with pytest.raises(ConfigError):
        DiffusionSchedule([0.1, 1.0])


def test_explicit_linear_endpoints():
    sch = DiffusionSchedule.linear(50, 1e-4, 0.02)
    assert sch.betas[1] == 1e-4 and sch.betas[-1] == pytest.approx(0.02)


def test_q_sample_at_t0_is_identity():
    sch = DiffusionSchedule.linear(10)
    x0 = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_array_equal(q_sample(sch, x0, 0, np.ones((5, 3))), x0)


def test_forward_marginal_variance():
    sch = DiffusionSchedule.linear(50)
    rng = np.random.default_rng(3)
    x0 = np.tile([[1.5, -0.7]], (100_000, 1))
    for t in (1, 10, 25, 50):
        xt = q_sample(sch, x0, t, rng.standard_normal(x0.shape))
        var = xt.var(axis=0)
        assert np.all(np.abs(var / (1 - sch.alpha_bars[t]) - 1) < 0.05)
        np.testing.assert_allclose(xt.mean(axis=0), np.sqrt(sch.alpha_bars[t]) * x0[0], atol=0.02)


def test_reduced_timesteps():
    assert reduced_timesteps(50, 50).tolist() == list(range(1, 51))
    steps = reduced_timesteps(50, 10)
    assert steps[0] == 1 and steps[-1] == 50 and len(steps) == 10
    with pytest.raises(ConfigError):
        reduced_timesteps(50, 51)
    with pytest.raises(ConfigError):
        reduced_timesteps(50, 1)


def test_parse_sampler():
    assert parse_sampler("reduced(10)").steps == 10
    assert parse_sampler("deterministic").kind == "deterministic"
    assert parse_sampler(None) is None
    with pytest.raises(ConfigError):
        parse_sampler("fast")


@pytest.fixture(scope="module")
def ddpm_handle():
    return gens.train_ddpm(_members(), GenTrainConfig("ddpm", epochs=100, ddpm=DDPMConfig(T=20)), 0)


def test_ddpm_point_mass_loss_decreases():
    pm = Dataset(np.zeros((32, 2)), Provenance("sampled", "pm"))
    h = gens.train_ddpm(pm, GenTrainConfig("ddpm", member_count=32, epochs=60, ddpm=DDPMConfig(T=10)), 0)
    curve = gens.training_info(h)["loss_curve"]
    assert np.mean(curve[-10:]) < np.mean(curve[:10])


def test_deterministic_sampler_is_reproducible(ddpm_handle):
    a = ddpm_handle.sample_uncond(40, "deterministic", 5).points
    b = ddpm_handle.sample_uncond(40, "deterministic", 5).points
    np.testing.assert_array_equal(a, b)


def test_reduced_full_length_equals_deterministic(ddpm_handle):
    a = ddpm_handle.sample_uncond(40, "deterministic", 5).points
    b = ddpm_handle.sample_uncond(40, "reduced(20)", 5).points
    np.testing.assert_array_equal(a, b)
    c = ddpm_handle.sample_uncond(40, "reduced(5)", 5).points
    assert not np.array_equal(a, c)


def test_ancestral_sampler_output(ddpm_handle):
    out = ddpm_handle.sample_uncond(200, "ancestral", 1)
    assert out.points.shape == (200, 2) and np.all(np.isfinite(out.points))
    assert ("warning", "sampler_ignored") not in out.provenance.detail
    with pytest.raises(ConfigError):
        ddpm_handle.sample_uncond(5, "reduced(21)", 0)


# --- reconstructors -------------------------------------------------------

SPEC8 = gaussian_mixture([0.5, 0.5], [[0.5] * 8, [-0.5] * 8], 0.3)


def test_mask_zeroes_fixed_coordinates():
    X = sample(SPEC8, 50, 0).points
    c = Corruptor.fit(Corruption("mask", 0.5), X, RngSeed(0))
    out1 = c.apply(X, np.random.default_rng(0))
    out2 = c.apply(X[::-1], np.random.default_rng(1))
    zero_cols = np.flatnonzero(np.all(out1 == 0, axis=0))
    assert len(zero_cols) == 4
    np.testing.assert_array_equal(zero_cols, np.flatnonzero(np.all(out2 == 0, axis=0)))


def test_quantize_uses_exactly_L_levels():
    X = sample(SPEC8, 500, 0).points
    c = Corruptor.fit(Corruption("quantize", 4), X, RngSeed(0))
    out = c.apply(X, np.random.default_rng(0))
    for j in range(8):
        vals = np.unique(out[:, j])
        assert len(vals) == 4
        np.testing.assert_allclose(vals, c.levels(j), atol=1e-12)


def test_subsample_interpolates():
    X = np.arange(8.0)[None, :] ** 2
    c = Corruptor.fit(Corruption("subsample", 2), X, RngSeed(0))
    out = c.apply(X, np.random.default_rng(0))[0]
    np.testing.assert_array_equal(out[::2], X[0, ::2])
    assert out[1] == (X[0, 0] + X[0, 2]) / 2
    assert out[7] == X[0, 6]  # right edge holds the last kept value


def test_add_noise_level():
    X = np.zeros((20_000, 2))
    c = Corruptor.fit(Corruption("add_noise", 0.3), X, RngSeed(0))
    assert c.apply(X, np.random.default_rng(0)).std() == pytest.approx(0.3, rel=0.02)


def test_corruption_validation():
    for kind, value in (("mask", 1.5), ("subsample", 1.5), ("add_noise", -1), ("quantize", 1), ("blur", 1)):
        with pytest.raises(ConfigError):
            Corruption(kind, value)


def test_noise_free_reconstructor_beats_untrained():
    members = sample(SPEC8, 64, RngSeed(0, "m"), source="members")
    cfg = GenTrainConfig("reconstructor", epochs=1, reconstructor=ReconstructorConfig(Corruption("add_noise", 0.0)))
    untrained = gens.train_reconstructor(members, cfg, 0)
    trained = gens.train_reconstructor(members, replace_epochs(cfg, 300), 0)
    err = lambda h: np.mean((h.transform(members).points - members.points) ** 2)
    assert err(trained) < err(untrained)


def replace_epochs(cfg, epochs):
    from dataclasses import replace

    return replace(cfg, epochs=epochs)


def test_conditional_handle_interface():
    members = sample(SPEC8, 64, RngSeed(0, "m"), source="members")
    cfg = GenTrainConfig("reconstructor", epochs=5, reconstructor=ReconstructorConfig(Corruption("mask", 0.5)))
    h = gens.train_reconstructor(members, cfg, 0)
    assert h.conditional and h.capability.corruption.kind == "mask"
    with pytest.raises(ConfigError):
        h.sample_uncond(5)
    with pytest.raises(ShapeError):
        h.transform(sample(MIX, 5, 0))
    out = h.transform(h.corrupt(members.subset(range(5)), 0))
    assert out.points.shape == (5, 8) and out.ids[0].startswith(f"gen[{h.id}]<")


# --- handles --------------------------------------------------------------


@pytest.mark.parametrize("family", ["gmm", "vae", "gan", "ddpm", "reconstructor"])
def test_handle_serialization_round_trip(family):
    members = sample(SPEC8, 32, 0, source="members")
    cfg = GenTrainConfig(family, member_count=32, epochs=3, ddpm=DDPMConfig(T=5))
    h = gens.train_generator(members, cfg, 1)
    back = gens.loads(gens.dumps(h))
    assert back.id == h.id and back.dim == h.dim and back.capability == h.capability
    if h.conditional:
        inp = h.corrupt(members, 3)
        np.testing.assert_array_equal(back.transform(inp).points, h.transform(inp).points)
    else:
        np.testing.assert_array_equal(back.sample_uncond(7, seed=2).points, h.sample_uncond(7, seed=2).points)
    doc = gens.handle_to_dict(h)
    assert doc["format_version"] == 1 and doc["config_hash"]


def test_handle_ids_track_config_data_and_seed():
    m = _members()
    base = gens.train_gmm_em(m, 2, 5, 0).id
    assert gens.train_gmm_em(m, 2, 5, 0).id == base
    assert gens.train_gmm_em(m, 3, 5, 0).id != base
    assert gens.train_gmm_em(m, 2, 5, 1).id != base
    assert gens.train_gmm_em(_members(seed=1), 2, 5, 0).id != base
    other = gaussian_mixture([1.0], [[0.0, 0.0]], 1.0)
    assert gens.spec_handle(MIX, m).id != gens.spec_handle(other, m).id


def test_gen_config_validation():
    with pytest.raises(ConfigError):
        GenTrainConfig("flow")
    with pytest.raises(ConfigError):
        GenTrainConfig("gmm", member_count=1)
    with pytest.raises(ConfigError):
        GenTrainConfig("ddpm", ddpm=DDPMConfig(T=1))
    with pytest.raises(ConfigError):
        GenTrainConfig("vae", vae=VAEConfig(latent_dim=0))
