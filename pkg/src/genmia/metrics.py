"""ROC / AUC evaluation of membership scores.

AUC is the Mann-Whitney statistic P(s+ > s-) + 0.5 P(s+ == s-), computed from
average ranks in O(n log n). ``pairwise_auc`` is the O(n^2) reference.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateLabelsError, DuplicateTagError, ShapeError

DEFAULT_THRESHOLD = 0.5
REPORT_COLUMNS = ("tag", "auc", "tpr", "fpr", "n_pos", "n_neg", "seed")


@dataclass(frozen=True)
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        y = np.asarray(self.labels).ravel()
        if s.shape != y.shape:
            raise ShapeError("scores and labels differ in length")
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y.astype(np.int64))

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return int(len(self.labels) - self.labels.sum())

    def check_two_classes(self):
        if self.n_pos == 0 or self.n_neg == 0:
            raise DegenerateLabelsError("AUC needs at least one positive and one negative")

    @classmethod
    def from_groups(cls, pos_scores, neg_scores) -> "ScoredSet":
        pos = np.asarray(pos_scores, dtype=np.float64).ravel()
        neg = np.asarray(neg_scores, dtype=np.float64).ravel()
        return cls(np.concatenate([pos, neg]), np.concatenate([np.ones(len(pos)), np.zeros(len(neg))]))


def mann_whitney_u(s: ScoredSet) -> float:
    """U statistic of the positives: #(s+ > s-) + 0.5 #(s+ == s-). Always a half-integer."""
    s.check_two_classes()
    ranks = rankdata(s.scores, method="average")
    n1 = s.n_pos
    return float(ranks[s.labels == 1].sum() - n1 * (n1 + 1) / 2.0)


def auc(s: ScoredSet) -> float:
    return mann_whitney_u(s) / (s.n_pos * s.n_neg)


def pairwise_auc(s: ScoredSet) -> float:
    """Brute-force AUC over every (positive, negative) pair."""
    s.check_two_classes()
    pos = s.scores[s.labels == 1][:, None]
    neg = s.scores[s.labels == 0][None, :]
    wins = np.count_nonzero(pos > neg) + 0.5 * np.count_nonzero(pos == neg)
    return wins / (pos.size * neg.size)


@dataclass(frozen=True)
class RocReport:
    auc: float
    roc_points: tuple  # ((fpr, tpr), ...) from (0, 0) to (1, 1)
    tpr_at_default: float
    fpr_at_default: float
    n_pos: int
    n_neg: int

    def trapezoid_area(self) -> float:
        pts = np.asarray(self.roc_points)
        return float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2.0))


def rates_at(s: ScoredSet, threshold: float = DEFAULT_THRESHOLD) -> tuple[float, float]:
    """(TPR, FPR) when ``score >= threshold`` is called a member."""
    s.check_two_classes()
    called = s.scores >= threshold
    tpr = np.count_nonzero(called & (s.labels == 1)) / s.n_pos
    fpr = np.count_nonzero(called & (s.labels == 0)) / s.n_neg
    return float(tpr), float(fpr)


def roc(s: ScoredSet, threshold: float = DEFAULT_THRESHOLD, rate_scores=None) -> RocReport:
    """Full ROC over unique thresholds plus TPR/FPR at ``threshold``.

    ``rate_scores`` optionally supplies the scores the fixed threshold applies
    to, when ``s`` holds a monotone transform of them (e.g. logits).
    """
    s.check_two_classes()
    order = np.argsort(-s.scores, kind="mergesort")
    sc, lab = s.scores[order], s.labels[order]
    last_of_run = np.r_[sc[1:] != sc[:-1], True]
    tp = np.cumsum(lab)[last_of_run]
    fp = np.cumsum(1 - lab)[last_of_run]
    fpr = np.r_[0.0, fp / s.n_neg]
    tpr = np.r_[0.0, tp / s.n_pos]
    rate_set = s if rate_scores is None else ScoredSet(rate_scores, s.labels)
    t_rate, f_rate = rates_at(rate_set, threshold)
    return RocReport(auc(s), tuple(zip(fpr.tolist(), tpr.tolist())), t_rate, f_rate, s.n_pos, s.n_neg)


def summarize(reports, seed=None) -> list[dict]:
    """One row per ``(tag, RocReport)``, sorted by tag; ``seed`` may be per-row via a 3-tuple."""
    rows, seen = [], set()
    for item in reports:
        tag, rep = item[0], item[1]
        row_seed = item[2] if len(item) > 2 else seed
        if tag in seen:
            raise DuplicateTagError(f"duplicate report tag {tag!r}")
        seen.add(tag)
        rows.append({
            "tag": tag, "auc": rep.auc, "tpr": rep.tpr_at_default, "fpr": rep.fpr_at_default,
            "n_pos": rep.n_pos, "n_neg": rep.n_neg, "seed": "" if row_seed is None else row_seed,
        })
    rows.sort(key=lambda r: r["tag"])
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def csv_to_rows(text: str, numeric=("auc", "tpr", "fpr")) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    for row in rows:
        for key in numeric:
            if key in row and row[key] != "":
                row[key] = float(row[key])
    return rows


def report_csv(rows) -> str:
    return rows_to_csv(rows, REPORT_COLUMNS)
