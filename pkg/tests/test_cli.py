import glob
import json
import os
import warnings

import pytest

from genmia import experiments as exp
from genmia.cli import load_run_config, main
from genmia.metrics import REPORT_COLUMNS

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

BASE = """
out_dir = "{out}"

[experiment]
n_queries = 300
n_member_test = 300
n_nonmember_test = 300
seeds = [0, 1]
{extra}

[experiment.attack]
widths = [32, 32]
epochs = 10
min_steps = 300

[experiment.generator]
family = "{family}"
member_count = 64
{gen_extra}
"""


def write_cfg(tmp_path, family="gmm", extra="", gen_extra="", out=None, name="run.toml"):
    out = out or str(tmp_path / "out")
    path = tmp_path / name
    path.write_text(BASE.format(out=out, extra=extra, family=family, gen_extra=gen_extra))
    return str(path), out


@pytest.fixture(autouse=True)
def _fresh():
    exp.clear_generator_memo()
    yield
    exp.set_model_cache(None)


def test_train_generator_is_deterministic(tmp_path):
    cfg, out = write_cfg(tmp_path)
    assert main(["train-generator", "--config", cfg]) == 0
    first = {f: open(os.path.join(out, f), "rb").read() for f in sorted(os.listdir(out))}
    assert {"generator.json", "generator_loss.csv", "generator_manifest.json"} <= set(first)
    exp.clear_generator_memo()
    os.rename(out, out + "_a")
    assert main(["train-generator", "--config", cfg]) == 0
    second = {f: open(os.path.join(out, f), "rb").read() for f in sorted(os.listdir(out))}
    assert first == second
    manifest = json.loads(first["generator_manifest.json"])
    assert manifest["format_version"] == 1 and manifest["seed"] == 0


def test_attack_writes_report_with_expected_columns(tmp_path, capsys):
    cfg, out = write_cfg(tmp_path)
    assert main(["train-generator", "--config", cfg]) == 0
    assert main(["attack", "--config", cfg]) == 0
    header = open(os.path.join(out, "report.csv")).readline().strip()
    assert tuple(header.split(",")) == REPORT_COLUMNS
    assert os.path.exists(os.path.join(out, "classifier.json"))
    assert "auc=" in capsys.readouterr().out


def test_attack_on_loaded_model_matches_inline(tmp_path):
    cfg, out = write_cfg(tmp_path)
    main(["train-generator", "--config", cfg])
    main(["attack", "--config", cfg])
    loaded = open(os.path.join(out, "report.csv")).read()
    exp.clear_generator_memo()
    inline = tmp_path / "inline"
    assert main(["attack", "--config", cfg, "--train-inline", "--out", str(inline)]) == 0
    assert open(inline / "report.csv").read() == loaded


def test_missing_model_exits_5_without_writing(tmp_path):
    cfg, out = write_cfg(tmp_path)
    assert main(["attack", "--config", cfg]) == 5
    assert not os.path.exists(out)
    assert main(["inspect", str(tmp_path / "absent.json")]) == 5


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg, _ = write_cfg(tmp_path, extra="n_querys = 5")
    assert main(["train-generator", "--config", cfg]) == 2
    assert "experiment.n_querys" in capsys.readouterr().err


def test_unwritable_output_exits_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg, _ = write_cfg(tmp_path, out=str(blocker / "sub"))
    assert main(["train-generator", "--config", cfg]) == 4


def test_diverged_training_exits_3(tmp_path):
    cfg, _ = write_cfg(tmp_path, family="vae", gen_extra="lr = 1e8\nepochs = 20")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert main(["train-generator", "--config", cfg]) == 3


def test_dry_run_writes_nothing(tmp_path, capsys):
    cfg, out = write_cfg(tmp_path)
    assert main(["train-generator", "--config", cfg, "--dry-run"]) == 0
    assert main(["attack", "--config", cfg, "--dry-run"]) == 0
    assert main(["study", "baseline", "--config", cfg, "--dry-run"]) == 0
    assert not os.path.exists(out)
    assert capsys.readouterr().out.count("plan:") == 3


def test_unknown_study_exits_2(tmp_path, capsys):
    cfg, _ = write_cfg(tmp_path)
    assert main(["study", "nope", "--config", cfg]) == 2
    assert "budget" in capsys.readouterr().err


def test_budget_study_emits_full_grid(tmp_path):
    cfg, out = write_cfg(tmp_path, gen_extra="[experiment.generator.gmm]\nk = 8\niters = 20")
    assert main(["study", "budget", "--config", cfg]) == 0
    rows = open(os.path.join(out, "budget_rows.csv")).read().splitlines()
    assert len(rows) == 1 + len(exp.DEFAULT_BUDGET_GRID) * 2
    manifest = json.load(open(os.path.join(out, "budget_manifest.json")))
    assert manifest["study"] == "budget"


def test_seed_override_shifts_seed_list(tmp_path):
    cfg, out = write_cfg(tmp_path)
    assert main(["study", "baseline", "--config", cfg, "--seed", "7"]) == 0
    rows = open(os.path.join(out, "baseline_rows.csv")).read().splitlines()[1:]
    assert [r.split(",")[2] for r in rows] == ["7", "8"]


def test_inspect_generator(tmp_path, capsys):
    cfg, out = write_cfg(tmp_path)
    main(["train-generator", "--config", cfg])
    capsys.readouterr()
    assert main(["inspect", "--config", cfg]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["family"] == "gmm" and doc["config_hash"]


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(ROOT, "configs", "*.toml"))),
                         ids=os.path.basename)
def test_shipped_configs_load(path):
    cfg = load_run_config(path)
    assert cfg.study is None or cfg.study in exp.STUDIES
