"""CART decision tree with weighted Gini impurity.

Deterministic by construction: samples are canonicalised into a fixed
order before training, candidate splits are scanned feature-major with
thresholds ascending, and a strictly-greater comparison keeps the first
best, so exact gain ties resolve to the lowest feature index and then
the lowest threshold. Permuting the training rows cannot change the
fitted tree.

The tree is binary-split but supports any number of classes; leaves
store the weighted class distribution. `predict` keeps the two-class
contract (probability of class 1), `predict_class` serves multiclass
callers such as the status assigner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class TreeConfig:
    max_depth: int = 8
    min_samples_split: int = 10
    class_weights: dict[int, float] | None = None


@dataclass
class _Node:
    feature: int = -1         # -1 marks a leaf
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    distribution: list[float] = field(default_factory=list)
    weight: float = 0.0


def _canonical_order(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    # lexsort keys: last key is primary; feature 0 dominates, then 1, ..., then y, w
    keys = [w, y.astype(float)] + [x[:, j] for j in range(x.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _gini_from_sums(class_sums: np.ndarray, total: float) -> float:
    if total <= 0.0:
        return 0.0
    p = class_sums / total
    return float(1.0 - (p * p).sum())


class DecisionTree:
    def __init__(self, config: TreeConfig | None = None):
        self.config = config or TreeConfig()
        self.nodes: list[_Node] = []
        self.n_classes: int = 0
        self.n_features: int = 0
        self.importances: np.ndarray | None = None

    # ------------------------------------------------------------ training

    def fit(self, x: np.ndarray, y: np.ndarray) -> "DecisionTree":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=int)
        if x.ndim != 2 or len(x) != len(y) or len(x) == 0:
            raise DataError("fit expects a non-empty 2d matrix and matching labels")
        if not np.isfinite(x).all():
            raise DataError("fit expects finite feature values")
        if (y < 0).any():
            raise DataError("labels must be non-negative integers")

        self.n_features = x.shape[1]
        self.n_classes = max(int(y.max()) + 1, 2)
        weights = self.config.class_weights or {}
        w = np.array([float(weights.get(int(c), 1.0)) for c in y], dtype=float)

        order = _canonical_order(x, y, w)
        x, y, w = x[order], y[order], w[order]

        self.nodes = []
        self._gain_by_feature = np.zeros(self.n_features, dtype=float)
        self._total_weight = float(w.sum())
        self._grow(x, y, w, depth=0)

        total_gain = self._gain_by_feature.sum()
        if total_gain > 0.0:
            self.importances = self._gain_by_feature / total_gain
        else:
            self.importances = np.zeros(self.n_features, dtype=float)
        del self._gain_by_feature
        return self

    def _class_sums(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        sums = np.zeros(self.n_classes, dtype=float)
        np.add.at(sums, y, w)
        return sums

    def _grow(self, x: np.ndarray, y: np.ndarray, w: np.ndarray, depth: int) -> int:
        node_id = len(self.nodes)
        class_sums = self._class_sums(y, w)
        node_weight = float(w.sum())
        node = _Node(distribution=(class_sums / node_weight).tolist(), weight=node_weight)
        self.nodes.append(node)

        if (depth >= self.config.max_depth
                or len(y) < self.config.min_samples_split
                or _gini_from_sums(class_sums, node_weight) == 0.0):
            return node_id

        split = self._best_split(x, y, w, class_sums, node_weight)
        if split is None:
            return node_id
        gain, feature, threshold = split
        self._gain_by_feature[feature] += (node_weight / self._total_weight) * gain

        mask = x[:, feature] <= threshold
        node.feature = feature
        node.threshold = threshold
        node.left = self._grow(x[mask], y[mask], w[mask], depth + 1)
        node.right = self._grow(x[~mask], y[~mask], w[~mask], depth + 1)
        return node_id

    def _best_split(self, x, y, w, class_sums, node_weight):
        parent_gini = _gini_from_sums(class_sums, node_weight)
        best_gain = 0.0
        best: tuple[float, int, float] | None = None
        n = len(y)
        for j in range(self.n_features):
            order = np.argsort(x[:, j], kind="stable")
            xs = x[order, j]
            boundaries = np.nonzero(xs[:-1] != xs[1:])[0]
            if len(boundaries) == 0:
                continue
            onehot = np.zeros((n, self.n_classes), dtype=float)
            onehot[np.arange(n), y[order]] = w[order]
            cum = np.cumsum(onehot, axis=0)

            left_sums = cum[boundaries]                     # (k, n_classes)
            right_sums = class_sums[None, :] - left_sums
            wl = left_sums.sum(axis=1)
            wr = node_weight - wl
            with np.errstate(invalid="ignore", divide="ignore"):
                gini_l = 1.0 - ((left_sums / wl[:, None]) ** 2).sum(axis=1)
                gini_r = 1.0 - ((right_sums / wr[:, None]) ** 2).sum(axis=1)
            gains = parent_gini - (wl / node_weight) * gini_l - (wr / node_weight) * gini_r
            gains = np.where((wl > 0) & (wr > 0), gains, -np.inf)

            k = int(np.argmax(gains))  # first max: lowest threshold wins ties
            if gains[k] > best_gain and gains[k] > 0.0:
                best_gain = float(gains[k])
                thr = (xs[boundaries[k]] + xs[boundaries[k] + 1]) / 2.0
                best = (best_gain, j, float(thr))
        return best

    # ------------------------------------------------------------ inference

    def _check_fitted(self):
        if not self.nodes:
            raise DataError("tree is not fitted")

    def _leaf_for(self, row: np.ndarray) -> _Node:
        node = self.nodes[0]
        while node.feature != -1:
            node = self.nodes[node.left if row[node.feature] <= node.threshold else node.right]
        return node

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        self._check_fitted()
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {x.shape[1]}")
        return np.stack([np.array(self._leaf_for(row).distribution) for row in x])

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Probability of class 1 per row."""
        return self.predict_proba(x)[:, 1]

    def predict_class(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def predict_smoothed(self, x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
        """Laplace-corrected probability of class 1.

        (count_1 + alpha) / (leaf_weight + alpha * n_classes): pure leaves
        of different sizes stay distinguishable and never score exactly 0
        or 1, which threshold scans over leaf scores rely on.
        """
        self._check_fitted()
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {x.shape[1]}")
        out = np.empty(len(x), dtype=float)
        for i, row in enumerate(x):
            leaf = self._leaf_for(row)
            count_1 = leaf.distribution[1] * leaf.weight
            out[i] = (count_1 + alpha) / (leaf.weight + alpha * self.n_classes)
        return out

    # ------------------------------------------------------------ serialisation

    def to_json(self) -> dict:
        self._check_fitted()
        return {
            "config": {
                "max_depth": self.config.max_depth,
                "min_samples_split": self.config.min_samples_split,
                "class_weights": {str(k): v for k, v in (self.config.class_weights or {}).items()},
            },
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "importances": [float(v) for v in self.importances],
            "nodes": [
                {
                    "feature": n.feature,
                    "threshold": n.threshold,
                    "left": n.left,
                    "right": n.right,
                    "distribution": n.distribution,
                    "weight": n.weight,
                }
                for n in self.nodes
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DecisionTree":
        try:
            cfg = TreeConfig(
                max_depth=obj["config"]["max_depth"],
                min_samples_split=obj["config"]["min_samples_split"],
                class_weights={int(k): float(v)
                               for k, v in obj["config"]["class_weights"].items()} or None,
            )
            tree = cls(cfg)
            tree.n_classes = obj["n_classes"]
            tree.n_features = obj["n_features"]
            tree.importances = np.array(obj["importances"], dtype=float)
            tree.nodes = [
                _Node(feature=n["feature"], threshold=n["threshold"], left=n["left"],
                      right=n["right"], distribution=list(n["distribution"]),
                      weight=n["weight"])
                for n in obj["nodes"]
            ]
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed tree document: {exc}") from None
        return tree
