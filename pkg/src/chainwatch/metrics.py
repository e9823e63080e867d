"""Classification metrics, including the early and consistency weighted F1s.

All ratio metrics define 0/0 as 0. Hard decisions sit strictly above the
0.5 boundary: a probability of exactly 0.5 counts as negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def hard_decisions(y_prob: np.ndarray) -> np.ndarray:
    return np.asarray(y_prob, dtype=float) > 0.5


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def _safe_div(num: float, den: float) -> float:
    return num / den if den != 0 else 0.0


def standard_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> Metrics:
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    tp = float(np.sum(y_true & y_pred))
    fp = float(np.sum(~y_true & y_pred))
    fn = float(np.sum(y_true & ~y_pred))
    tn = float(np.sum(~y_true & ~y_pred))
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    return Metrics(
        accuracy=_safe_div(tp + tn, tp + fp + fn + tn),
        precision=precision,
        recall=recall,
        f1=_safe_div(2 * precision * recall, precision + recall),
    )


def f1_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return standard_metrics(y_true, y_pred).f1


def f1_early(f1_list) -> float:
    """Early-weighted F1: sum(F1_i / sqrt(i)) / sum(1 / sqrt(i)), i from 1.

    Early splits dominate; a constant F1 series collapses to that value.
    """
    f1 = np.asarray(f1_list, dtype=float)
    if len(f1) == 0:
        return 0.0
    i = np.arange(1, len(f1) + 1, dtype=float)
    inv = 1.0 / np.sqrt(i)
    return float((f1 * inv).sum() / inv.sum())


def f1_consistent(f1_list, decisions) -> float:
    """Consistency-weighted F1 over consecutive splits.

    `decisions` holds the hard predictions per split, one row per split
    (a 1d series is treated as a single column). Split i earns weight
    sqrt(i) times its F1, but only when no evaluated series changes its
    decision between splits i and i+1; the last split carries no term.
    A single-split series has no transitions and passes its F1 through.
    """
    f1 = np.asarray(f1_list, dtype=float)
    dec = np.asarray(decisions, dtype=bool)
    if dec.ndim == 1:
        dec = dec[:, None]
    if dec.shape[0] != len(f1):
        raise ValueError("decisions must have one row per split")
    n = len(f1)
    if n == 0:
        return 0.0
    if n == 1:
        return float(f1[0])
    i = np.arange(1, n, dtype=float)             # splits 1 .. N-1 (1-based)
    stable = (dec[:-1] == dec[1:]).all(axis=1)   # agreement between i and i+1
    weights = np.sqrt(i)
    return float((weights * f1[:-1] * stable).sum() / weights.sum())


def per_split_metrics(y_true: np.ndarray, prob_matrix: np.ndarray) -> list[Metrics]:
    """Metrics per split for a (n_splits, n_series) probability matrix."""
    return [standard_metrics(y_true, hard_decisions(row)) for row in prob_matrix]


@dataclass(frozen=True)
class MetricReport:
    per_split: list[Metrics]
    f1_early: float
    f1_consistent: float

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([m.accuracy for m in self.per_split])) if self.per_split else 0.0

    @property
    def mean_precision(self) -> float:
        return float(np.mean([m.precision for m in self.per_split])) if self.per_split else 0.0

    @property
    def mean_recall(self) -> float:
        return float(np.mean([m.recall for m in self.per_split])) if self.per_split else 0.0

    @property
    def mean_f1(self) -> float:
        return float(np.mean([m.f1 for m in self.per_split])) if self.per_split else 0.0


def metric_report(y_true: np.ndarray, prob_matrix: np.ndarray) -> MetricReport:
    """Per-split metrics plus the early and consistency summaries."""
    per_split = per_split_metrics(y_true, prob_matrix)
    f1_list = [m.f1 for m in per_split]
    return MetricReport(
        per_split=per_split,
        f1_early=f1_early(f1_list),
        f1_consistent=f1_consistent(f1_list, hard_decisions(prob_matrix)),
    )


def write_metrics_csv(report: MetricReport, path) -> None:
    """Split rows carry the four plain metrics; the trailing summary row
    carries the means plus the weighted F1 variants."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("split,accuracy,precision,recall,f1,f1_early,f1_consistent\n")
        for i, m in enumerate(report.per_split):
            fh.write(f"{i},{m.accuracy!r},{m.precision!r},{m.recall!r},{m.f1!r},,\n")
        fh.write(f"summary,{report.mean_accuracy!r},{report.mean_precision!r},"
                 f"{report.mean_recall!r},,{report.f1_early!r},{report.f1_consistent!r}\n")
