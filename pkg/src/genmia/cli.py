"""Command-line entry point.

Subcommands: ``train-generator``, ``attack``, ``study`` and ``inspect``. All of
them read one TOML run config whose ``[experiment]`` table mirrors
:class:`~genmia.experiments.ExperimentConfig`; unknown keys are errors.

Exit codes: 0 ok, 2 config error, 3 training diverged, 4 I/O error,
5 missing generator model.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import experiments as exp
from . import generators as gens
from .attack import CLASSIFIER_FORMAT_VERSION
from .config import config_hash, from_dict
from .errors import ConfigError, InsufficientDataError, TrainingDivergedError
from .metrics import RocReport, report_csv, rows_to_csv, summarize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4
EXIT_MISSING_MODEL = 5
RUN_FORMAT_VERSION = 1
LOG_ENV = "GEN_MIA_LOG"
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("genmia")


@dataclass(frozen=True)
class RunConfig:
    experiment: exp.ExperimentConfig = field(default_factory=exp.ExperimentConfig)
    study: Optional[str] = None
    seed: Optional[int] = None
    out_dir: str = "out"
    model_cache_dir: Optional[str] = None
    generator_path: Optional[str] = None

    def run_seed(self) -> int:
        return self.seed if self.seed is not None else self.experiment.seeds[0]


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def load_run_config(path: str, seed_override: Optional[int] = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"config {path} is not valid TOML: {exc}") from exc
    try:
        cfg = from_dict(RunConfig, data)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    if seed_override is not None:
        if seed_override < 0 or seed_override >= 2**64:
            raise CliError(EXIT_CONFIG, "--seed must be an unsigned 64-bit integer")
        n = len(cfg.experiment.seeds)
        cfg = replace(cfg, seed=seed_override,
                      experiment=replace(cfg.experiment, seeds=tuple(seed_override + i for i in range(n))))
    return cfg


def _prepare_dir(path: str):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, f".probe-{os.getpid()}")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise CliError(EXIT_IO, f"output directory {path} is not writable: {exc}") from exc


def _write(path: str, text: str):
    try:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _manifest(kind: str, cfg: RunConfig, **extra) -> str:
    doc = {"format_version": RUN_FORMAT_VERSION, "kind": kind, "config_hash": config_hash(cfg.experiment)}
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _curves_csv(info: dict) -> str:
    curves = {k: v for k, v in info.items() if isinstance(v, list) and all(isinstance(x, float) for x in v)}
    names = sorted(curves)
    length = max((len(curves[k]) for k in names), default=0)
    rows = [{"epoch": i, **{k: (curves[k][i] if i < len(curves[k]) else "") for k in names}} for i in range(length)]
    return rows_to_csv(rows, ("epoch", *names))


def default_generator_path(cfg: RunConfig) -> str:
    return cfg.generator_path or os.path.join(cfg.out_dir, "generator.json")


def cmd_train_generator(cfg: RunConfig, dry_run: bool = False) -> int:
    seed = cfg.run_seed()
    path = default_generator_path(cfg)
    if dry_run:
        g = cfg.experiment.generator
        print(f"plan: train {g.family} on {g.member_count} members, seed {seed}, write {path}")
        return EXIT_OK
    _prepare_dir(os.path.dirname(path) or ".")
    handle = exp.train_target(cfg.experiment, seed)
    _write(path, gens.dumps(handle))
    info = gens.training_info(handle)
    base = os.path.splitext(path)[0]
    _write(base + "_loss.csv", _curves_csv(info))
    _write(base + "_manifest.json", _manifest(
        "generator", cfg, family=gens.describe(handle), seed=seed, handle_id=handle.id,
        generator_config_hash=config_hash(cfg.experiment.generator), model_file=os.path.basename(path),
        loss_curve_file=os.path.basename(base + "_loss.csv"),
    ))
    print(f"trained {gens.describe(handle)} generator {handle.id} -> {path}")
    return EXIT_OK


def cmd_attack(cfg: RunConfig, dry_run: bool = False, train_inline: bool = False) -> int:
    seed = cfg.run_seed()
    e = cfg.experiment
    cell = exp.attack_cell(e, seed)
    path = default_generator_path(cfg)
    if dry_run:
        print(f"plan: attack {e.generator.family} target (seed {seed}); {min(e.n_queries, 5000)} queries/class; "
              f"test {min(e.n_member_test, e.generator.member_count)} members vs {e.n_nonmember_test} non-members; "
              f"generator {'trained inline' if train_inline else path}")
        return EXIT_OK
    if not os.path.exists(path) and not train_inline:
        raise CliError(EXIT_MISSING_MODEL, f"generator model {path} not found (train it first or pass --train-inline)")
    _prepare_dir(cfg.out_dir)
    handle = None
    if os.path.exists(path):
        try:
            with open(path, encoding="utf-8") as fh:
                handle = gens.loads(fh.read())
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read generator {path}: {exc}") from exc
        except (ValueError, KeyError) as exc:
            raise CliError(EXIT_IO, f"generator file {path} is unreadable: {exc}") from exc
    result = exp.run_cell(cell, handle=handle)
    row = result.rows[0]
    rep = RocReport(row["auc"], None, row["tpr"], row["fpr"], row["n_pos_test"], row["n_neg_test"])
    _write(os.path.join(cfg.out_dir, "report.csv"), report_csv(summarize([("attack", rep)], seed=seed)))
    _write(os.path.join(cfg.out_dir, "classifier.json"), result.classifier.dumps())
    _write(os.path.join(cfg.out_dir, "attack_manifest.json"), _manifest(
        "attack", cfg, seed=seed, classifier_format_version=CLASSIFIER_FORMAT_VERSION,
        generator=("inline" if handle is None else path), files=["report.csv", "classifier.json"],
    ))
    print(f"attack seed {seed}: auc={row['auc']:.4f} tpr={row['tpr']:.4f} fpr={row['fpr']:.4f}")
    return EXIT_OK


def cmd_study(cfg: RunConfig, name: Optional[str], jobs: int = 1, dry_run: bool = False) -> int:
    name = name or cfg.study
    if name is None:
        raise CliError(EXIT_CONFIG, f"no study given; valid: {', '.join(exp.STUDIES)}")
    if name not in exp.STUDIES:
        raise CliError(EXIT_CONFIG, f"unknown study {name!r}; valid: {', '.join(exp.STUDIES)}")
    if dry_run:
        print(f"plan: study {name} over seeds {list(cfg.experiment.seeds)} with {jobs} job(s), output {cfg.out_dir}")
        return EXIT_OK
    _prepare_dir(cfg.out_dir)
    if cfg.model_cache_dir:
        _prepare_dir(cfg.model_cache_dir)
    exp.set_model_cache(cfg.model_cache_dir)
    try:
        report = exp.run_study(name, cfg.experiment, jobs)
    finally:
        exp.set_model_cache(None)
    try:
        files = report.write(cfg.out_dir, name)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write study output: {exc}") from exc
    _write(os.path.join(cfg.out_dir, f"{name}_manifest.json"),
           _manifest("study", cfg, study=name, files=[os.path.basename(f) for f in files]))
    for agg in report.aggregates:
        print(f"{name} {agg['condition']}: mean_auc={agg['mean_auc']:.4f} std={agg['std_auc']:.4f} n={agg['n_seeds']}")
    for key, value in report.summary.items():
        log.info("summary %s = %s", key, value)
    return EXIT_OK


def cmd_inspect(path: str) -> int:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CliError(EXIT_MISSING_MODEL if not os.path.exists(path) else EXIT_IO, f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_IO, f"{path} is not JSON: {exc}") from exc
    if "model" in doc:
        summary = {k: doc.get(k) for k in ("format_version", "family", "id", "dim", "capability", "config_hash")}
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="genmia", description="Black-box membership inference against toy generators.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML run config")
        sp.add_argument("--out", help="output directory (overrides out_dir)")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--dry-run", action="store_true", help="print the plan and write nothing")

    common(sub.add_parser("train-generator", help="train and save the target generator"))
    sp = sub.add_parser("attack", help="run one attack and write report.csv + classifier.json")
    common(sp)
    sp.add_argument("--train-inline", action="store_true", help="train the generator if no model file exists")
    sp = sub.add_parser("study", help="run one of the studies")
    sp.add_argument("name", nargs="?", help=f"one of: {', '.join(exp.STUDIES)}")
    common(sp)
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp = sub.add_parser("inspect", help="print a model or run manifest")
    sp.add_argument("path", nargs="?", help="model or manifest file")
    sp.add_argument("--config", help="TOML run config (inspects its generator file)")
    return p


def _setup_logging():
    level = os.environ.get(LOG_ENV, "warn").lower()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("genmia")
    root.handlers[:] = [handler]
    root.setLevel(_LEVELS.get(level, logging.WARNING))


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "inspect":
            if args.path:
                return cmd_inspect(args.path)
            if not args.config:
                raise CliError(EXIT_CONFIG, "inspect needs a path or --config")
            return cmd_inspect(default_generator_path(load_run_config(args.config)))
        cfg = load_run_config(args.config, args.seed)
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        if args.command == "train-generator":
            return cmd_train_generator(cfg, args.dry_run)
        if args.command == "attack":
            return cmd_attack(cfg, args.dry_run, args.train_inline)
        if args.jobs < 1:
            raise CliError(EXIT_CONFIG, "--jobs must be at least 1")
        return cmd_study(cfg, args.name, args.jobs, args.dry_run)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
