"""Round-based feature selection and augmentation.

Each round trains several bootstrap decision-tree sessions on the
current schema and scores them on a fixed stratified validation split.
The best session's importances repartition the base features: strong
path features gain their max/min/std statistics next to the average
(address features and path counts have nothing to expand and stay in
reserve no matter how strong), weak-but-used features are kept as-is,
and zero-importance features are deleted for good. The loop continues
while the round's mean score does not fall below the previous best and
reverts the last recomputation when it does.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dtree import DecisionTree, TreeConfig
from .errors import DataError
from .features import (
    AF_GROUP,
    PATH_FEATURES,
    PATH_GROUPS,
    FeatureColumn,
    FeatureSchema,
    seed_schema,
)
from .metrics import f1_score, hard_decisions

AUGMENTABLE = frozenset(f"{g}.{f}" for g in PATH_GROUPS for f in PATH_FEATURES)
_SEED_BASE_ORDER = tuple(seed_schema().base_names())


@dataclass(frozen=True)
class FeatureLists:
    augment: tuple[str, ...]
    reserve: tuple[str, ...]
    delete: tuple[str, ...]

    def to_json(self) -> dict:
        return {"augment": list(self.augment), "reserve": list(self.reserve),
                "delete": list(self.delete)}

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureLists":
        try:
            return cls(tuple(obj["augment"]), tuple(obj["reserve"]), tuple(obj["delete"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed feature lists: {exc}") from None


def seed_lists() -> FeatureLists:
    return FeatureLists(augment=(), reserve=_SEED_BASE_ORDER, delete=())


def apply_lists(lists: FeatureLists) -> FeatureSchema:
    """Materialise the column schema the lists describe.

    Base features keep their canonical order. An augmented path feature
    contributes avg/max/min/std columns; a reserved feature contributes
    its seed column; deleted features contribute nothing.
    """
    augment = set(lists.augment)
    delete = set(lists.delete)
    unknown = (augment | set(lists.reserve) | delete) - set(_SEED_BASE_ORDER)
    if unknown:
        raise DataError(f"unknown base features in lists: {sorted(unknown)}")
    not_path = augment - AUGMENTABLE
    if not_path:
        raise DataError(f"only per-path features can be augmented: {sorted(not_path)}")

    cols: list[FeatureColumn] = []
    for base in _SEED_BASE_ORDER:
        if base in delete:
            continue
        group, feature = base.split(".", 1)
        if base in augment:
            cols.extend(FeatureColumn(group, feature, s) for s in ("avg", "max", "min", "std"))
        elif group == AF_GROUP or feature == "path_count":
            cols.append(FeatureColumn(group, feature, "raw"))
        else:
            cols.append(FeatureColumn(group, feature, "avg"))
    return FeatureSchema(tuple(cols))


def importance_by_base(tree: DecisionTree, schema: FeatureSchema) -> dict[str, float]:
    """Column importances summed per base feature, in schema order."""
    if tree.importances is None or len(tree.importances) != len(schema):
        raise DataError("tree importances do not match the schema width")
    agg: dict[str, float] = {}
    for col, imp in zip(schema.columns, tree.importances):
        agg[col.base_name] = agg.get(col.base_name, 0.0) + float(imp)
    return agg


def classify_features(importance: dict[str, float], theta: float,
                      previous_delete: tuple[str, ...] = ()) -> FeatureLists:
    """Partition base features by importance relative to the round maximum.

    s = 0 deletes; s >= theta * max augments (path features only; others
    stay in reserve); anything in between reserves. Previously deleted
    features remain deleted.
    """
    values = list(importance.values())
    s_max = max(values) if values else 0.0
    if s_max <= 0.0:
        raise DataError("degenerate importance: every feature scored zero")
    bar = theta * s_max

    augment, reserve, delete = [], [], list(previous_delete)
    for base, s in importance.items():
        if s < 0:
            raise DataError(f"negative importance for {base!r}")
        if s == 0.0:
            delete.append(base)
        elif s >= bar and base in AUGMENTABLE:
            augment.append(base)
        else:
            reserve.append(base)
    return FeatureLists(tuple(augment), tuple(reserve), tuple(delete))


def stratified_split(y: np.ndarray, validation_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic stratified holdout; every class keeps a training row."""
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    val: list[int] = []
    for cls in sorted(np.unique(y)):
        idx = np.flatnonzero(y == cls)
        if len(idx) < 2:
            continue
        n_val = min(len(idx) - 1, max(1, round(validation_fraction * len(idx))))
        val.extend(rng.permutation(idx)[:n_val].tolist())
    val_idx = np.array(sorted(val), dtype=int)
    train_idx = np.setdiff1d(np.arange(len(y)), val_idx)
    return train_idx, val_idx


@dataclass
class SelectionConfig:
    theta: float = 0.5
    sessions: int = 10
    max_rounds: int = 16
    validation_fraction: float = 0.2
    max_depth: int = 8
    min_samples_split: int = 10
    class_weights: dict[int, float] | None = None


@dataclass
class RoundRecord:
    index: int
    schema_width: int
    session_scores: list[float]
    mean_score: float
    best_session: int
    accepted: bool
    n_augment: int
    n_reserve: int
    n_delete: int


@dataclass
class SelectionResult:
    lists: FeatureLists
    schema: FeatureSchema
    best_tree: DecisionTree | None
    rounds: list[RoundRecord] = field(default_factory=list)
    degenerate: bool = False
    hit_round_cap: bool = False
    best_mean_score: float = 0.0

    def report_json(self) -> dict:
        return {
            "best_mean_score": self.best_mean_score,
            "degenerate": self.degenerate,
            "hit_round_cap": self.hit_round_cap,
            "final_lists": self.lists.to_json(),
            "rounds": [
                {
                    "index": r.index,
                    "schema_width": r.schema_width,
                    "session_scores": r.session_scores,
                    "mean_score": r.mean_score,
                    "best_session": r.best_session,
                    "accepted": r.accepted,
                    "list_sizes": {"augment": r.n_augment, "reserve": r.n_reserve,
                                   "delete": r.n_delete},
                }
                for r in self.rounds
            ],
        }


def run_selection(x_builder, y: np.ndarray, cfg: SelectionConfig, seed: int) -> SelectionResult:
    """The selection loop.

    x_builder(schema) must return one row per label, columns per schema.
    The guard admits the first round for free (0 >= 0) and any later
    round whose mean validation F1 does not drop below the running best;
    a dropping round is reverted and ends the loop. Termination is
    guaranteed by the round cap, an exact fixed point, or degeneracy.
    """
    y = np.asarray(y, dtype=int)
    if set(np.unique(y)) - {0, 1}:
        raise DataError("selection labels must be binary")
    train_idx, val_idx = stratified_split(y, cfg.validation_fraction, [seed, 0x5f17])
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise DataError("not enough labelled data to split for selection")

    lists = seed_lists()
    result = SelectionResult(lists=lists, schema=apply_lists(lists), best_tree=None)
    s_avg = 0.0
    s_best_avg = 0.0

    for round_idx in range(cfg.max_rounds):
        s_best_avg = s_avg
        schema = apply_lists(lists)
        x = np.asarray(x_builder(schema), dtype=float)
        if x.shape != (len(y), len(schema)):
            raise DataError(
                f"x_builder returned shape {x.shape}, expected {(len(y), len(schema))}")

        x_train, y_train = x[train_idx], y[train_idx]
        x_val, y_val = x[val_idx], y[val_idx]
        rng = np.random.default_rng([seed, round_idx])

        scores: list[float] = []
        best_score, best_tree, best_session = -1.0, None, -1
        tree_cfg = TreeConfig(max_depth=cfg.max_depth,
                              min_samples_split=cfg.min_samples_split,
                              class_weights=cfg.class_weights)
        for session in range(cfg.sessions):
            boot = rng.integers(0, len(x_train), size=len(x_train))
            tree = DecisionTree(tree_cfg).fit(x_train[boot], y_train[boot])
            score = f1_score(y_val.astype(bool), hard_decisions(tree.predict(x_val)))
            scores.append(score)
            if score > best_score:
                best_score, best_tree, best_session = score, tree, session

        s_avg = float(np.mean(scores))
        accepted = s_avg >= s_best_avg
        importance = importance_by_base(best_tree, schema)

        if all(v == 0.0 for v in importance.values()):
            result.degenerate = True
            result.rounds.append(RoundRecord(
                round_idx, len(schema), scores, s_avg, best_session, False,
                len(lists.augment), len(lists.reserve), len(lists.delete)))
            break

        new_lists = classify_features(importance, cfg.theta, previous_delete=lists.delete)
        result.rounds.append(RoundRecord(
            round_idx, len(schema), scores, s_avg, best_session, accepted,
            len(new_lists.augment) if accepted else len(lists.augment),
            len(new_lists.reserve) if accepted else len(lists.reserve),
            len(new_lists.delete) if accepted else len(lists.delete)))

        if not accepted:
            break  # revert: keep the last accepted state

        result.lists = new_lists
        result.schema = apply_lists(new_lists)
        result.best_tree = best_tree
        result.best_mean_score = s_avg
        if new_lists == lists and s_avg == s_best_avg:
            break  # exact fixed point; nothing can change
        lists = new_lists
    else:
        result.hit_round_cap = True

    return result
