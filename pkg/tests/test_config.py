import pytest

from genmia.attack import AttackConfig
from genmia.config import config_hash, from_dict, to_dict
from genmia.errors import ConfigError
from genmia.experiments import ExperimentConfig, PairConfig
from genmia.generators.base import GenTrainConfig


def test_unknown_key_names_dotted_path():
    with pytest.raises(ConfigError, match="generator.gmm.kk"):
        from_dict(ExperimentConfig, {"generator": {"family": "gmm", "gmm": {"kk": 3}}})


def test_type_mismatch_is_config_error():
    with pytest.raises(ConfigError, match="n_queries"):
        from_dict(ExperimentConfig, {"n_queries": "many"})
    with pytest.raises(ConfigError):
        from_dict(ExperimentConfig, {"n_queries": True})


def test_nested_round_trip():
    cfg = from_dict(ExperimentConfig, {
        "n_queries": 300,
        "seeds": [3, 4],
        "pair": {"shift": 0.25},
        "generator": {"family": "gmm", "member_count": 32, "gmm": {"k": 4, "iters": 10}},
        "attack": {"widths": [16, 16]},
    })
    assert isinstance(cfg.pair, PairConfig) and cfg.pair.shift == 0.25
    assert isinstance(cfg.generator, GenTrainConfig) and cfg.generator.gmm.k == 4
    assert isinstance(cfg.attack, AttackConfig) and tuple(cfg.attack.widths) == (16, 16)
    assert cfg.seeds == (3, 4)
    again = from_dict(ExperimentConfig, to_dict(cfg))
    assert again == cfg


def test_hash_is_stable_and_sensitive():
    a = from_dict(ExperimentConfig, {"n_queries": 300})
    b = from_dict(ExperimentConfig, {"n_queries": 300})
    c = from_dict(ExperimentConfig, {"n_queries": 301})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 16


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        from_dict(ExperimentConfig, {"seeds": []})
    with pytest.raises(ConfigError):
        from_dict(ExperimentConfig, {"seeds": [1, 1]})
    with pytest.raises(ConfigError):
        from_dict(ExperimentConfig, {"n_queries": 0})
