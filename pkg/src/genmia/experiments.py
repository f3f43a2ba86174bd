"""Study runners built on one shared per-(condition, seed) pipeline.

Every study reduces to a list of :class:`Cell` objects. A cell draws members
and auxiliary data, trains (or reuses) the target generator, assembles the
attack training set, trains the attack model and scores one or more test
sets. All randomness comes from streams under ``RngSeed(seed)`` whose names do
not depend on the study, so e.g. the overlap study at ratio 0 reproduces the
baseline bit for bit.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
import time
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from . import generators as gens
from .attack import (
    AttackConfig,
    build_attack_trainset,
    build_shadow_trainset,
    bayes_oracle_logratio,
    train_attack_model,
)
from .config import config_hash
from .errors import ConfigError, InsufficientDataError
from .generators import GenTrainConfig, GeneratorHandle
from .metrics import ScoredSet, roc, rows_to_csv
from .nn import sigmoid
from .rng import RngSeed
from .synthdata import (
    AuxSplit,
    Dataset,
    DistributionSpec,
    concat,
    gaussian_mixture,
    make_pair,
    mix_overlap,
    sample,
    split_sizes,
)

log = logging.getLogger(__name__)

DEFAULT_BUDGET_GRID = tuple(range(100, 1001, 100)) + (2000, 3000, 4000, 5000)
DEFAULT_OVERLAP_RATIOS = (0.0, 0.1, 0.25, 0.5, 1.0)
ROW_COLUMNS = ("study", "condition", "seed", "auc", "tpr", "fpr", "n_pos_test", "n_neg_test")
AGG_COLUMNS = ("study", "condition", "mean_auc", "std_auc", "n_seeds")
TIMING_COLUMNS = ("study", "condition", "seed", "wall_time_ms")
EXTRA_COLUMNS = ("study", "condition", "seed", "key", "value")
SUMMARY_COLUMNS = ("study", "key", "value")


def default_member_spec(dim: int = 2) -> DistributionSpec:
    """Four-component mixture on the corners of a square (padded with zeros above dim 2)."""
    corners = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    means = np.zeros((4, dim))
    means[:, : min(dim, 2)] = corners[:, : min(dim, 2)]
    if dim > 2:
        means[:, 2:] = np.tile([[0.5], [-0.5], [-0.5], [0.5]], (1, dim - 2))
    return gaussian_mixture([0.25] * 4, means, 0.35)


@dataclass(frozen=True)
class PairConfig:
    """Member domain plus how the attacker's auxiliary domain relates to it."""

    base: DistributionSpec = field(default_factory=default_member_spec)
    shift: float = 0.5
    pair_seed: int = 0
    aux: Optional[DistributionSpec] = None

    def resolve(self) -> tuple[DistributionSpec, DistributionSpec]:
        if self.aux is not None:
            if self.aux.dim != self.base.dim:
                raise ConfigError("aux spec and member spec differ in dimension")
            return self.base, self.aux
        pair = make_pair(self.base, self.shift, RngSeed(self.pair_seed, "pair"))
        return pair.member_spec, pair.aux_spec


@dataclass(frozen=True)
class Condition:
    """One baseline condition; unset fields fall back to the experiment defaults."""

    name: str
    generator: Optional[GenTrainConfig] = None
    sampler: Optional[str] = None
    pair: Optional[PairConfig] = None
    n_queries: Optional[int] = None


@dataclass(frozen=True)
class ExperimentConfig:
    pair: PairConfig = field(default_factory=PairConfig)
    generator: GenTrainConfig = field(default_factory=GenTrainConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    sampler: Optional[str] = None
    n_queries: int = 1000
    n_member_test: int = 1000
    n_nonmember_test: int = 1000
    aux_out_size: Optional[int] = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    conditions: tuple[Condition, ...] = ()
    budget_grid: tuple[int, ...] = DEFAULT_BUDGET_GRID
    overlap_ratios: tuple[float, ...] = DEFAULT_OVERLAP_RATIOS
    aux_counts: tuple[int, ...] = (1, 2, 4)
    extra_aux: tuple[DistributionSpec, ...] = ()
    multi_aux_test_only: bool = False
    shadow: Optional[GenTrainConfig] = None
    shadow_sampler: Optional[str] = None
    shadow_train_on: str = "aux"
    transfer_spec: Optional[DistributionSpec] = None
    pool_size: Optional[int] = None

    def __post_init__(self):
        if self.n_queries < 1 or self.n_member_test < 1 or self.n_nonmember_test < 1:
            raise ConfigError("n_queries and test sizes must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if len({c.name for c in self.conditions}) != len(self.conditions):
            raise ConfigError("condition names must be unique")


@dataclass(frozen=True)
class Cell:
    """Everything one (condition, seed) run needs; see :func:`run_cell`."""

    study: str
    condition: str
    seed: int
    member_spec: DistributionSpec
    aux_specs: tuple[DistributionSpec, ...]
    generator: GenTrainConfig
    attack: AttackConfig
    sampler: Optional[str]
    n_queries: int
    n_member_test: int
    n_nonmember_test: int
    aux_out_size: Optional[int] = None
    overlap_ratio: float = 0.0
    train_aux_first_only: bool = False
    shadow: Optional[GenTrainConfig] = None
    shadow_sampler: Optional[str] = None
    transfer_spec: Optional[DistributionSpec] = None
    same_distribution: bool = False
    pool_size: Optional[int] = None
    oracle: bool = False


@dataclass
class CellResult:
    cell: Cell
    rows: list
    extras: list
    wall_time_ms: int
    classifier: object = None


@dataclass
class ExperimentReport:
    study: str
    rows: list
    aggregates: list
    summary: dict
    extras: list = field(default_factory=list)
    timings: list = field(default_factory=list)

    def rows_csv(self) -> str:
        return rows_to_csv(self.rows, ROW_COLUMNS)

    def aggregate_csv(self) -> str:
        return rows_to_csv(self.aggregates, AGG_COLUMNS)

    def extras_csv(self) -> str:
        return rows_to_csv(self.extras, EXTRA_COLUMNS)

    def summary_csv(self) -> str:
        rows = [{"study": self.study, "key": k, "value": v} for k, v in self.summary.items()]
        return rows_to_csv(rows, SUMMARY_COLUMNS)

    def timings_csv(self) -> str:
        return rows_to_csv(self.timings, TIMING_COLUMNS)

    def aucs(self, condition: str) -> dict[int, float]:
        return {r["seed"]: r["auc"] for r in self.rows if r["condition"] == condition}

    def mean_auc(self, condition: str) -> float:
        return float(np.mean(list(self.aucs(condition).values())))

    def extra(self, condition: str, key: str) -> dict[int, float]:
        return {e["seed"]: e["value"] for e in self.extras if e["condition"] == condition and e["key"] == key}

    def write(self, out_dir: str, prefix: str | None = None) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        prefix = prefix or self.study
        written = []
        for name, text in (
            ("rows", self.rows_csv()), ("aggregate", self.aggregate_csv()),
            ("extras", self.extras_csv()), ("summary", self.summary_csv()),
            ("timings", self.timings_csv()),
        ):
            path = os.path.join(out_dir, f"{prefix}_{name}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            written.append(path)
        return written


# ---------------------------------------------------------------------------
# generator cache

_GEN_MEMO: "OrderedDict[str, GeneratorHandle]" = OrderedDict()
_MEMO_SIZE = 8
_CACHE_DIR: Optional[str] = None


def set_model_cache(path: Optional[str]):
    global _CACHE_DIR
    _CACHE_DIR = path


def clear_generator_memo():
    _GEN_MEMO.clear()


def _generator_key(cfg, members: Dataset, seed: RngSeed, true_spec) -> str:
    return config_hash([cfg, gens.fingerprint(members.points), seed.token(), true_spec])


def obtain_generator(cfg: GenTrainConfig, members: Dataset, seed: RngSeed, true_spec=None) -> GeneratorHandle:
    """Train a generator or fetch it from the in-process memo / on-disk cache."""
    key = _generator_key(cfg, members, seed, true_spec)
    if key in _GEN_MEMO:
        _GEN_MEMO.move_to_end(key)
        return _GEN_MEMO[key]
    path = os.path.join(_CACHE_DIR, f"gen-{key}.json") if _CACHE_DIR else None
    if path and os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            handle = gens.loads(fh.read())
    else:
        handle = gens.train_generator(members, cfg, seed, true_spec=true_spec)
        if path:
            os.makedirs(_CACHE_DIR, exist_ok=True)
            tmp = f"{path}.{os.getpid()}.tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(gens.dumps(handle))
            os.replace(tmp, path)
    _GEN_MEMO[key] = handle
    while len(_GEN_MEMO) > _MEMO_SIZE:
        _GEN_MEMO.popitem(last=False)
    return handle


# ---------------------------------------------------------------------------
# the per-cell pipeline


def _even(total: int, k: int) -> list[int]:
    base, rem = divmod(total, k)
    return [base + (1 if i < rem else 0) for i in range(k)]


def _evaluate(clf, pos: Dataset, neg: Dataset) -> tuple:
    logits = np.concatenate([clf.logits(pos.points), clf.logits(neg.points)])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return roc(ScoredSet(logits, labels), clf.threshold, rate_scores=sigmoid(logits)), logits[len(pos):]


def run_cell(cell: Cell, handle: Optional[GeneratorHandle] = None) -> CellResult:
    """Run one (condition, seed); ``handle`` replaces the trained target when given."""
    t0 = time.perf_counter()
    root = RngSeed(cell.seed)
    gcfg = cell.generator
    if cell.same_distribution:
        pool_n = gcfg.member_count + cell.n_nonmember_test
        if cell.pool_size is not None and cell.pool_size < pool_n:
            raise InsufficientDataError(
                f"pool of {cell.pool_size} cannot hold {gcfg.member_count} members "
                f"and {cell.n_nonmember_test} held-out non-members"
            )
        pool = sample(cell.member_spec, pool_n, root.child("members"), source="pool")
        members, heldout = split_sizes(pool, [gcfg.member_count, cell.n_nonmember_test], root.child("pool_split"))
    else:
        members = sample(cell.member_spec, gcfg.member_count, root.child("members"), source="members")
        heldout = None

    if handle is None:
        gen = obtain_generator(gcfg, members, root.child("generator"), true_spec=cell.member_spec)
    else:
        gen = handle
    n = min(cell.n_queries, 5000)
    n_out_total = n if cell.aux_out_size is None else cell.aux_out_size
    if n_out_total < n:
        raise InsufficientDataError(f"aux_out holds {n_out_total} points but {n} negatives are needed")
    K = len(cell.aux_specs)
    train_specs = 1 if cell.train_aux_first_only else K
    in_sizes = _even(n, train_specs) if gen.conditional else [0] * train_specs
    out_sizes = _even(n_out_total, train_specs)
    test_sizes = _even(cell.n_nonmember_test, K)
    aux_in, aux_out, aux_test = [], [], []
    for i, spec in enumerate(cell.aux_specs):
        n_in = in_sizes[i] if i < train_specs else 0
        n_out = out_sizes[i] if i < train_specs else 0
        pool = sample(spec, n_in + n_out + test_sizes[i], root.child("aux", i), source=f"aux{i}")
        p_in, p_out, p_test = split_sizes(pool, [n_in, n_out, test_sizes[i]], root.child("split", i))
        aux_in.append(p_in)
        aux_out.append(p_out)
        aux_test.append(p_test)
    aux_in, aux_out, aux_test = (concat(parts, name) for parts, name in
                                 ((aux_in, "aux_in"), (aux_out, "aux_out"), (aux_test, "aux_test")))
    if cell.overlap_ratio > 0:
        aux_out = mix_overlap(aux_out, members, cell.overlap_ratio, root.child("overlap"))
    split = AuxSplit(aux_in, aux_out)

    if cell.shadow is not None:
        shadow = obtain_generator(cell.shadow, aux_out, root.child("shadow"))
        ts = build_shadow_trainset(gen, shadow, split, n, cell.sampler, cell.shadow_sampler, root.child("attackset"))
    else:
        ts = build_attack_trainset(gen, split, n, cell.sampler, root.child("attackset"))
    clf = train_attack_model(ts, cell.attack, root.child("attack"))

    n_pos = min(cell.n_member_test, len(members))
    test_pos = members.subset(root.child("test_members").generator().permutation(len(members))[:n_pos])
    evaluations = {cell.condition: aux_test}
    if cell.transfer_spec is not None:
        evaluations = {
            cell.condition + "in_domain": aux_test,
            cell.condition + "transfer": sample(cell.transfer_spec, cell.n_nonmember_test,
                                                root.child("transfer"), source="transfer"),
        }
    if heldout is not None:
        evaluations = {cell.condition: heldout}

    train_ids = set(ts.ids.tolist())
    member_ids = set(members.ids.tolist())
    if not set(test_pos.ids.tolist()) <= member_ids:
        raise AssertionError("test positives must be generator training members")
    rows, extras = [], []
    for cond, negs in evaluations.items():
        if train_ids & set(negs.ids.tolist()):
            raise AssertionError("test negatives overlap the attack training negatives")
        rep, neg_logits = _evaluate(clf, test_pos, negs)
        rows.append({
            "study": cell.study, "condition": cond, "seed": cell.seed, "auc": rep.auc,
            "tpr": rep.tpr_at_default, "fpr": rep.fpr_at_default,
            "n_pos_test": rep.n_pos, "n_neg_test": rep.n_neg,
        })
        if K > 1 and negs is aux_test:
            for i in range(K):
                mask = np.char.startswith(negs.ids.astype(str), f"aux{i}:")
                fpr_i = float(np.mean(neg_logits[mask] >= 0.0)) if mask.any() else float("nan")
                extras.append(_extra(cell, cond, f"fpr_aux{i}", fpr_i))
    if cell.oracle:
        gen_density = gens.privileged_density(gen)
        pos_lr = bayes_oracle_logratio(gen_density, cell.aux_specs[0], test_pos)
        neg_lr = bayes_oracle_logratio(gen_density, cell.aux_specs[0], aux_test)
        from .metrics import auc as _auc

        extras.append(_extra(cell, cell.condition, "oracle_auc", _auc(ScoredSet.from_groups(pos_lr, neg_lr))))
    extras.append(_extra(cell, cell.condition, "attack_final_loss", float(clf.meta["final_loss"])))
    return CellResult(cell, rows, extras, int(round((time.perf_counter() - t0) * 1000)), clf)


def _extra(cell, cond, key, value):
    return {"study": cell.study, "condition": cond, "seed": cell.seed, "key": key, "value": value}


def _run_group(cells):
    return [run_cell(c) for c in cells]


def _init_worker(cache_dir):
    set_model_cache(cache_dir)


def run_cells(cells: list[Cell], jobs: int = 1) -> list[CellResult]:
    """Run cells, optionally across processes; results come back in input order."""
    groups: "OrderedDict[int, list]" = OrderedDict()
    for idx, c in enumerate(cells):
        groups.setdefault(c.seed, []).append((idx, c))
    out: list = [None] * len(cells)
    if jobs <= 1 or len(groups) <= 1:
        for members in groups.values():
            for (idx, _), res in zip(members, _run_group([c for _, c in members])):
                out[idx] = res
        return out
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(_CACHE_DIR,)) as ex:
        futures = [(members, ex.submit(_run_group, [c for _, c in members])) for members in groups.values()]
        for members, fut in futures:
            for (idx, _), res in zip(members, fut.result()):
                out[idx] = res
    return out


def _assemble(study: str, results: list[CellResult], order: list[str], summary: dict) -> ExperimentReport:
    rank = {name: i for i, name in enumerate(order)}
    rows = sorted((r for res in results for r in res.rows), key=lambda r: (rank.get(r["condition"], len(rank)), r["condition"], r["seed"]))
    seen = set()
    for r in rows:
        key = (r["condition"], r["seed"])
        if key in seen:
            raise AssertionError(f"duplicate report cell {key}")
        seen.add(key)
    extras = sorted((e for res in results for e in res.extras),
                    key=lambda e: (rank.get(e["condition"], len(rank)), e["condition"], e["seed"], e["key"]))
    aggregates = []
    conditions = list(OrderedDict.fromkeys(r["condition"] for r in rows))
    for cond in conditions:
        aucs = np.array([r["auc"] for r in rows if r["condition"] == cond])
        aggregates.append({
            "study": study, "condition": cond, "mean_auc": float(aucs.mean()),
            "std_auc": float(aucs.std(ddof=1)) if len(aucs) > 1 else 0.0, "n_seeds": len(aucs),
        })
    timings = sorted(({"study": study, "condition": res.cell.condition, "seed": res.cell.seed,
                       "wall_time_ms": res.wall_time_ms} for res in results),
                     key=lambda t: (rank.get(t["condition"], len(rank)), t["condition"], t["seed"]))
    return ExperimentReport(study, rows, aggregates, summary, extras, timings)


# ---------------------------------------------------------------------------
# studies


def _base_cell(cfg: ExperimentConfig, study: str, condition: str, seed: int, **over) -> Cell:
    member_spec, aux_spec = cfg.pair.resolve()
    kw = dict(
        study=study, condition=condition, seed=seed, member_spec=member_spec, aux_specs=(aux_spec,),
        generator=cfg.generator, attack=cfg.attack, sampler=cfg.sampler, n_queries=cfg.n_queries,
        n_member_test=cfg.n_member_test, n_nonmember_test=cfg.n_nonmember_test,
        aux_out_size=cfg.aux_out_size,
    )
    kw.update(over)
    return Cell(**kw)


def attack_cell(cfg: ExperimentConfig, seed: int) -> Cell:
    """The single cell behind the ``attack`` command."""
    _, aux_spec = cfg.pair.resolve()
    oracle = _is_mixture_family(cfg.generator) and aux_spec.kind == "gaussian_mixture"
    return _base_cell(cfg, "attack", "default", seed, oracle=oracle)


def members_for(cfg: ExperimentConfig, seed: int) -> Dataset:
    """Training members exactly as :func:`run_cell` draws them."""
    member_spec, _ = cfg.pair.resolve()
    return sample(member_spec, cfg.generator.member_count, RngSeed(seed).child("members"), source="members")


def train_target(cfg: ExperimentConfig, seed: int) -> GeneratorHandle:
    member_spec, _ = cfg.pair.resolve()
    return obtain_generator(cfg.generator, members_for(cfg, seed), RngSeed(seed).child("generator"),
                            true_spec=member_spec)


def _is_mixture_family(gcfg: GenTrainConfig) -> bool:
    return gcfg.family in ("gmm", "spec")


def baseline_cells(cfg: ExperimentConfig, study: str = "baseline") -> list[Cell]:
    conditions = cfg.conditions or (Condition("default"),)
    cells = []
    for cond in conditions:
        gcfg = cond.generator or cfg.generator
        pair = cond.pair or cfg.pair
        member_spec, aux_spec = pair.resolve()
        for seed in cfg.seeds:
            cells.append(_base_cell(
                cfg, study, cond.name, seed, member_spec=member_spec, aux_specs=(aux_spec,),
                generator=gcfg, sampler=cond.sampler if cond.sampler is not None else cfg.sampler,
                n_queries=cond.n_queries or cfg.n_queries,
                oracle=_is_mixture_family(gcfg) and aux_spec.kind == "gaussian_mixture",
            ))
    return cells


def run_baseline(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    cells = baseline_cells(cfg)
    results = run_cells(cells, jobs)
    order = [c.name for c in cfg.conditions] or ["default"]
    report = _assemble("baseline", results, order, {})
    for agg in report.aggregates:
        report.summary[f"mean_auc[{agg['condition']}]"] = agg["mean_auc"]
    return report


def run_transferability(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    if cfg.transfer_spec is None:
        raise ConfigError("transfer study needs transfer_spec")
    _, aux_spec = cfg.pair.resolve()
    if cfg.transfer_spec == aux_spec:
        raise ConfigError("transfer_spec must differ from the auxiliary spec")
    cells = [_base_cell(cfg, "transfer", "", seed, transfer_spec=cfg.transfer_spec) for seed in cfg.seeds]
    report = _assemble("transfer", run_cells(cells, jobs), ["in_domain", "transfer"], {})
    report.summary["mean_auc[in_domain]"] = report.mean_auc("in_domain")
    report.summary["mean_auc[transfer]"] = report.mean_auc("transfer")
    return report


def run_budget_sweep(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    grid = list(cfg.budget_grid)
    if not grid or any(g < 1 for g in grid):
        raise ConfigError("budget grid must be a non-empty list of positive counts")
    supply = cfg.aux_out_size
    if supply is not None:
        bad = [g for g in grid if g > supply]
        if bad:
            raise InsufficientDataError(f"aux_out supply {supply} is smaller than grid points {bad}")
    names = [f"n={g}" for g in grid]
    cells = [_base_cell(cfg, "budget", name, seed, n_queries=g)
             for name, g in zip(names, grid) for seed in cfg.seeds]
    report = _assemble("budget", run_cells(cells, jobs), names, {})
    means = {g: report.mean_auc(f"n={g}") for g in grid}
    top = max(grid)
    sat = min(g for g in grid if means[g] >= means[top] - 0.01)
    report.summary["saturation_point"] = sat
    lo = min(grid)
    lo_aucs, top_aucs = report.aucs(f"n={lo}"), report.aucs(f"n={top}")
    report.summary["min_per_seed_gain_top_vs_min"] = float(min(top_aucs[s] - lo_aucs[s] for s in cfg.seeds))
    return report


def run_overlap_sweep(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    ratios = list(cfg.overlap_ratios)
    if not ratios or any(not 0.0 <= r <= 1.0 for r in ratios):
        raise ConfigError("overlap ratios must lie in [0, 1]")
    names = [f"ratio={r:g}" for r in ratios]
    cells = [_base_cell(cfg, "overlap", name, seed, overlap_ratio=float(r))
             for name, r in zip(names, ratios) for seed in cfg.seeds]
    report = _assemble("overlap", run_cells(cells, jobs), names, {})
    means = [report.mean_auc(n) for n in names]
    if len(ratios) > 1 and np.ptp(means) > 0:
        report.summary["spearman_ratio_vs_auc"] = float(stats.spearmanr(ratios, means).statistic)
    else:
        report.summary["spearman_ratio_vs_auc"] = float("nan")
    return report


def multi_aux_specs(cfg: ExperimentConfig, k: int) -> tuple[DistributionSpec, ...]:
    member_spec, aux_spec = cfg.pair.resolve()
    specs = [aux_spec] + list(cfg.extra_aux)
    i = 1
    while len(specs) < k:
        specs.append(make_pair(member_spec, cfg.pair.shift, RngSeed(cfg.pair.pair_seed + i, "pair")).aux_spec)
        i += 1
    return tuple(specs[:k])


def run_multi_aux(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    counts = list(cfg.aux_counts)
    if not counts or any(k not in (1, 2, 4) for k in counts):
        raise ConfigError("aux_counts must be drawn from {1, 2, 4}")
    names = [f"K={k}" for k in counts]
    cells = [
        _base_cell(cfg, "multiaux", name, seed, aux_specs=multi_aux_specs(cfg, k),
                   train_aux_first_only=cfg.multi_aux_test_only)
        for name, k in zip(names, counts) for seed in cfg.seeds
    ]
    report = _assemble("multiaux", run_cells(cells, jobs), names, {})
    for name in names:
        report.summary[f"mean_auc[{name}]"] = report.mean_auc(name)
    return report


def run_shadow_negatives(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    if cfg.shadow is None:
        raise ConfigError("shadow study needs a shadow generator config")
    if cfg.shadow.family == cfg.generator.family:
        raise ConfigError("shadow family must differ from the target family")
    if cfg.shadow_train_on != "aux":
        raise ConfigError("the shadow model must be trained on auxiliary data, never on members")
    cells = []
    for seed in cfg.seeds:
        cells.append(_base_cell(cfg, "shadow", "sampled", seed))
        cells.append(_base_cell(cfg, "shadow", "generated", seed, shadow=cfg.shadow,
                                shadow_sampler=cfg.shadow_sampler))
    report = _assemble("shadow", run_cells(cells, jobs), ["sampled", "generated"], {})
    sampled, generated = report.aucs("sampled"), report.aucs("generated")
    report.summary["mean_auc[sampled]"] = report.mean_auc("sampled")
    report.summary["mean_auc[generated]"] = report.mean_auc("generated")
    report.summary["mean_abs_gap"] = float(np.mean([abs(sampled[s] - generated[s]) for s in cfg.seeds]))
    return report


def run_same_distribution(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    cells = [_base_cell(cfg, "samedist", "same_distribution", seed, same_distribution=True,
                        pool_size=cfg.pool_size) for seed in cfg.seeds]
    report = _assemble("samedist", run_cells(cells, jobs), ["same_distribution"], {})
    aucs = np.array(list(report.aucs("same_distribution").values()))
    report.summary["mean_auc"] = float(aucs.mean())
    report.summary["n_seeds"] = len(aucs)
    if len(aucs) > 1 and aucs.std() > 0:
        test = stats.ttest_1samp(aucs, 0.5, alternative="greater")
        report.summary["t_stat"] = float(test.statistic)
        report.summary["p_value_mean_gt_0.5"] = float(test.pvalue)
    return report


STUDIES = {
    "baseline": run_baseline,
    "transfer": run_transferability,
    "budget": run_budget_sweep,
    "overlap": run_overlap_sweep,
    "multiaux": run_multi_aux,
    "shadow": run_shadow_negatives,
    "samedist": run_same_distribution,
}


def run_study(name: str, cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    if name not in STUDIES:
        raise ConfigError(f"unknown study {name!r}; valid: {', '.join(STUDIES)}")
    return STUDIES[name](cfg, jobs)
