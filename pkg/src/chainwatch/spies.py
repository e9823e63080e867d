"""Spy-based reliable-negative selection for positive-unlabeled data.

A seeded sample of known positives (the spies) is planted in the
unlabeled pool before scoring. Scanning candidate thresholds upward,
the score step where the unlabeled mass grows fastest relative to the
spy mass marks the boundary below which unlabeled instances are taken
as reliable negatives. Only unlabeled instances are ever returned, so
no labeled positive can leak into the negative set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dtree import DecisionTree, TreeConfig
from .errors import DataError


@dataclass
class SpySelection:
    reliable_mask: np.ndarray      # bool over the unlabeled pool
    spy_indices: np.ndarray        # indices into the positive pool
    threshold: float
    unlabeled_scores: np.ndarray
    spy_scores: np.ndarray

    def to_report(self) -> dict:
        return {
            "n_spies": int(len(self.spy_indices)),
            "n_reliable_negatives": int(self.reliable_mask.sum()),
            "threshold": float(self.threshold),
            "spy_score_min": float(self.spy_scores.min()),
            "spy_score_max": float(self.spy_scores.max()),
        }


def _default_scorer_factory(x: np.ndarray, y: np.ndarray, seed: int):
    # A deep tree memorises the pool and sends every 0-labelled point,
    # spies included, to a pure leaf, which collapses the threshold scan.
    # Keep it shallow so spies score like the positives they are, and
    # smooth leaf frequencies so equal-purity leaves stay distinguishable.
    tree = DecisionTree(TreeConfig(max_depth=3, min_samples_split=10)).fit(x, y)
    return lambda data: tree.predict_smoothed(data)


def select_reliable_negatives(
    x_positive: np.ndarray,
    x_unlabeled: np.ndarray,
    seed: int,
    spy_fraction: float = 0.15,
    scorer_factory=None,
) -> SpySelection:
    x_positive = np.asarray(x_positive, dtype=float)
    x_unlabeled = np.asarray(x_unlabeled, dtype=float)
    if len(x_positive) == 0 or len(x_unlabeled) == 0:
        raise DataError("reliable-negative selection needs positives and unlabeled data")

    rng = np.random.default_rng(seed)
    n_spies = math.ceil(spy_fraction * len(x_positive))
    if n_spies >= len(x_positive):
        raise DataError(
            "spy split would leave no labeled positives; need at least two")
    spy_indices = np.sort(rng.choice(len(x_positive), size=n_spies, replace=False))
    spy_mask = np.zeros(len(x_positive), dtype=bool)
    spy_mask[spy_indices] = True

    x_train = np.concatenate([x_positive[~spy_mask], x_unlabeled, x_positive[spy_mask]])
    y_train = np.concatenate([
        np.ones(int((~spy_mask).sum()), dtype=int),
        np.zeros(len(x_unlabeled) + n_spies, dtype=int),
    ])
    scorer = (scorer_factory or _default_scorer_factory)(x_train, y_train, seed)

    unlabeled_scores = np.asarray(scorer(x_unlabeled), dtype=float)
    spy_scores = np.asarray(scorer(x_positive[spy_mask]), dtype=float)

    pool = np.concatenate([unlabeled_scores, spy_scores])
    candidates = np.unique(pool)
    if len(candidates) < 2:
        raise DataError(
            "scorer produced a single distinct score; retune the scorer before "
            "selecting reliable negatives"
        )

    # mass arriving at each candidate score, as a proportion of its own pool
    cum_u = np.searchsorted(np.sort(unlabeled_scores), candidates, side="right") / len(unlabeled_scores)
    cum_s = np.searchsorted(np.sort(spy_scores), candidates, side="right") / len(spy_scores)
    step_u = np.diff(np.concatenate([[0.0], cum_u]))
    step_s = np.diff(np.concatenate([[0.0], cum_s]))
    gains = step_u - step_s
    k_star = int(np.argmax(gains))  # ties resolve to the lowest score

    if k_star + 1 < len(candidates):
        threshold = float(candidates[k_star + 1])
    else:
        threshold = math.nextafter(float(candidates[k_star]), math.inf)

    reliable_mask = unlabeled_scores < threshold
    return SpySelection(
        reliable_mask=reliable_mask,
        spy_indices=spy_indices,
        threshold=threshold,
        unlabeled_scores=unlabeled_scores,
        spy_scores=spy_scores,
    )
