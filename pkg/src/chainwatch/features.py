"""Hourly behaviour features for addresses.

Every address gets a fixed-width hourly matrix covering its first
`horizon_hours` hours after activation. Row t may only use transactions
with timestamp < start + (t+1) hours; this causality rule is load-bearing
for early prediction and is enforced by construction (events are bucketed
by hour and rows aggregate buckets 0..t).

Column layout of the raw matrix (width 212):
  16 address features, then for each path-set kind (LT-BK, ST-BK, LT-FR,
  ST-FR) a 49-wide block: path count followed by max/min/avg/std of the
  12 per-path features. Schemas select/reorder columns by name; the seed
  schema keeps address features, path counts, and the avg statistics.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .pathtrace import (
    BACKWARD,
    FORWARD,
    PATH_SET_KINDS,
    PathConfig,
    TransferPath,
    build_expansion_tree,
    forward_paths,
    st_threshold,
)
from .txgraph import AddressIndex, TransactionGraph

logger = logging.getLogger(__name__)

HOUR_SECONDS = 3600
DEFAULT_HORIZON = 200

ADDRESS_FEATURES = (
    "balance",
    "spend_count", "receive_count", "spend_receive_ratio",
    "spend_count_1h", "receive_count_1h", "spend_receive_ratio_1h",
    "max_spends_per_hour", "max_receives_per_hour",
    "zero_amount_spends", "zero_amount_receives",
    "max_spend_hour", "max_receive_hour", "spend_receive_hour_gap",
    "active_hours", "activity_rate",
)

PATH_FEATURES = (
    "hop_count", "height",
    "max_input_amount", "min_input_amount",
    "max_output_amount", "min_output_amount",
    "max_input_quantity", "min_input_quantity",
    "max_output_quantity", "min_output_quantity",
    "max_score", "min_score",
)

SET_STATISTICS = ("max", "min", "avg", "std")

AF_GROUP = "AF"
PATH_GROUPS = PATH_SET_KINDS  # ("LT-BK", "ST-BK", "LT-FR", "ST-FR")

SET_BLOCK_WIDTH = 1 + len(PATH_FEATURES) * len(SET_STATISTICS)  # 49
RAW_WIDTH = len(ADDRESS_FEATURES) + len(PATH_GROUPS) * SET_BLOCK_WIDTH  # 212


@dataclass(frozen=True)
class FeatureColumn:
    group: str
    feature: str
    statistic: str  # "raw" for address features and path counts

    @property
    def name(self) -> str:
        if self.statistic == "raw":
            return f"{self.group}.{self.feature}"
        return f"{self.group}.{self.feature}.{self.statistic}"

    @property
    def base_name(self) -> str:
        return f"{self.group}.{self.feature}"


def _raw_columns() -> tuple[FeatureColumn, ...]:
    cols = [FeatureColumn(AF_GROUP, f, "raw") for f in ADDRESS_FEATURES]
    for group in PATH_GROUPS:
        cols.append(FeatureColumn(group, "path_count", "raw"))
        for feature in PATH_FEATURES:
            for stat in SET_STATISTICS:
                cols.append(FeatureColumn(group, feature, stat))
    return tuple(cols)


_RAW_COLUMNS = _raw_columns()
_RAW_INDEX = {c.name: i for i, c in enumerate(_RAW_COLUMNS)}


class FeatureSchema:
    """An ordered column selection over the raw matrix."""

    def __init__(self, columns: tuple[FeatureColumn, ...]):
        for col in columns:
            if col.name not in _RAW_INDEX:
                raise DataError(f"unknown feature column {col.name!r}")
        self.columns = tuple(columns)

    def __len__(self) -> int:
        return len(self.columns)

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureSchema) and self.columns == other.columns

    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def base_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for c in self.columns:
            seen.setdefault(c.base_name)
        return list(seen)

    def raw_indices(self) -> np.ndarray:
        return np.array([_RAW_INDEX[c.name] for c in self.columns], dtype=int)

    def project(self, raw_matrix: np.ndarray) -> np.ndarray:
        return raw_matrix[..., self.raw_indices()]

    def to_manifest(self) -> dict:
        return {
            "columns": [
                {"group": c.group, "feature": c.feature, "statistic": c.statistic}
                for c in self.columns
            ]
        }

    @classmethod
    def from_manifest(cls, manifest: dict) -> "FeatureSchema":
        try:
            cols = tuple(
                FeatureColumn(c["group"], c["feature"], c["statistic"])
                for c in manifest["columns"]
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed schema manifest: {exc}") from None
        return cls(cols)


def raw_schema() -> FeatureSchema:
    return FeatureSchema(_RAW_COLUMNS)


def seed_schema() -> FeatureSchema:
    """Address features plus path counts and per-path-feature averages (68 columns)."""
    cols = [FeatureColumn(AF_GROUP, f, "raw") for f in ADDRESS_FEATURES]
    for group in PATH_GROUPS:
        cols.append(FeatureColumn(group, "path_count", "raw"))
        cols.extend(FeatureColumn(group, feature, "avg") for feature in PATH_FEATURES)
    return FeatureSchema(tuple(cols))


# ------------------------------------------------------------ address side

class AddressActivity:
    """An address's receive/spend events bucketed by hour since activation."""

    def __init__(self, graph: TransactionGraph, index: AddressIndex, address: str,
                 horizon_hours: int = DEFAULT_HORIZON, hour_seconds: int = HOUR_SECONDS):
        self.address = address
        self.horizon = horizon_hours
        self.hour_seconds = hour_seconds
        self.start = index.activation(address)

        receive_events: list[tuple[int, int]] = []
        spend_events: list[tuple[int, int]] = []
        if self.start is not None:
            for tx_id in index.receives(address):
                tx = graph.tx(tx_id)
                bucket = (tx.timestamp - self.start) // hour_seconds
                if bucket >= horizon_hours:
                    continue
                amount = sum(o.amount for o in tx.outputs if o.address == address)
                receive_events.append((bucket, amount))
            for tx_id in index.spends(address):
                tx = graph.tx(tx_id)
                bucket = (tx.timestamp - self.start) // hour_seconds
                if bucket >= horizon_hours:
                    continue
                amount = sum(i.amount for i in tx.inputs if i.address == address)
                spend_events.append((bucket, amount))

        self.receive_buckets = np.array([e[0] for e in receive_events], dtype=int)
        self.receive_amounts = np.array([e[1] for e in receive_events], dtype=float)
        self.spend_buckets = np.array([e[0] for e in spend_events], dtype=int)
        self.spend_amounts = np.array([e[1] for e in spend_events], dtype=float)

    @property
    def inactive(self) -> bool:
        return self.start is None


def _ratio(num: float, den: float) -> float:
    return num / den if den != 0 else 0.0


def _hourly_counts(buckets: np.ndarray, t: int) -> np.ndarray:
    upto = buckets[buckets <= t]
    if len(upto) == 0:
        return np.zeros(t + 1, dtype=int)
    return np.bincount(upto, minlength=t + 1)


def address_features(activity: AddressActivity, t: int) -> np.ndarray:
    """The 16 address features at hour t (aggregating hours 0..t)."""
    out = np.zeros(len(ADDRESS_FEATURES), dtype=float)
    if activity.inactive:
        return out

    r_mask = activity.receive_buckets <= t
    s_mask = activity.spend_buckets <= t
    received = float(activity.receive_amounts[r_mask].sum())
    spent = float(activity.spend_amounts[s_mask].sum())
    balance = received - spent
    if balance < 0:
        logger.warning("address %s balance negative (%s) at hour %d; clamping",
                       activity.address, balance, t)
        balance = 0.0

    spend_count = int(s_mask.sum())
    receive_count = int(r_mask.sum())
    spend_recent = int((activity.spend_buckets == t).sum())
    receive_recent = int((activity.receive_buckets == t).sum())

    spends_per_hour = _hourly_counts(activity.spend_buckets, t)
    receives_per_hour = _hourly_counts(activity.receive_buckets, t)
    max_spend_hour = int(spends_per_hour.argmax()) if spend_count else 0
    max_receive_hour = int(receives_per_hour.argmax()) if receive_count else 0

    any_event = np.concatenate([activity.spend_buckets[s_mask], activity.receive_buckets[r_mask]])
    active_hours = int(len(np.unique(any_event)))

    out[0] = balance
    out[1] = spend_count
    out[2] = receive_count
    out[3] = _ratio(spend_count, receive_count)
    out[4] = spend_recent
    out[5] = receive_recent
    out[6] = _ratio(spend_recent, receive_recent)
    out[7] = int(spends_per_hour.max())
    out[8] = int(receives_per_hour.max())
    out[9] = int((activity.spend_amounts[s_mask] == 0).sum())
    out[10] = int((activity.receive_amounts[r_mask] == 0).sum())
    out[11] = max_spend_hour
    out[12] = max_receive_hour
    out[13] = max_spend_hour - max_receive_hour
    out[14] = active_hours
    out[15] = active_hours / (t + 1)
    return out


# ------------------------------------------------------------ path side

def path_features(graph: TransactionGraph, path: TransferPath) -> np.ndarray:
    """The 12 per-path features over one transfer chain."""
    in_amounts, out_amounts, in_counts, out_counts = [], [], [], []
    for hop in path.hops:
        tx = graph.tx(hop.tx)
        in_amounts.append(tx.total_input)
        out_amounts.append(tx.total_output)
        in_counts.append(len(tx.inputs))
        out_counts.append(len(tx.outputs))
    scores = [hop.score for hop in path.hops]
    return np.array([
        path.hop_count,
        path.height,
        max(in_amounts), min(in_amounts),
        max(out_amounts), min(out_amounts),
        max(in_counts), min(in_counts),
        max(out_counts), min(out_counts),
        max(scores), min(scores),
    ], dtype=float)


def path_feature_rows(graph: TransactionGraph, paths: list[TransferPath]) -> np.ndarray:
    if not paths:
        return np.zeros((0, len(PATH_FEATURES)), dtype=float)
    return np.stack([path_features(graph, p) for p in paths])


def aggregate_path_rows(rows: np.ndarray) -> np.ndarray:
    """49 set-level features: path count, then max/min/avg/std per feature.

    An empty set is all zeros. Standard deviation is the population form.
    """
    out = np.zeros(SET_BLOCK_WIDTH, dtype=float)
    if len(rows) == 0:
        return out
    out[0] = len(rows)
    stats = np.stack([
        rows.max(axis=0),
        rows.min(axis=0),
        rows.mean(axis=0),
        rows.std(axis=0),  # ddof=0
    ], axis=1)  # (12, 4) in max/min/avg/std order
    out[1:] = stats.reshape(-1)
    return out


def path_set_features(graph: TransactionGraph, paths: list[TransferPath]) -> np.ndarray:
    return aggregate_path_rows(path_feature_rows(graph, paths))


class PathFeatureCache:
    """Hourly path-set feature rows for one address, traced once per origin.

    Backward chains never change as time advances (ancestors predate the
    origin), so their rows are computed once. Forward trees are expanded
    to the horizon and re-cut per hour; a cut tree's chains equal a
    direct bounded trace unless the branch cap fired, in which case the
    hour is re-traced directly.
    """

    def __init__(self, graph: TransactionGraph, index: AddressIndex, address: str,
                 cfg: PathConfig, start: int, horizon_hours: int,
                 hour_seconds: int = HOUR_SECONDS):
        self.graph = graph
        self.cfg = cfg
        self.start = start
        self.horizon_end = start + horizon_hours * hour_seconds - 1
        st_fn = lambda h: st_threshold(h, cfg.st_floor)  # noqa: E731

        self.kind_specs = {
            "LT-BK": (index.receives(address), BACKWARD, cfg.lt_theta, cfg.lt_span),
            "ST-BK": (index.receives(address), BACKWARD, st_fn, cfg.st_span),
            "LT-FR": (index.spends(address), FORWARD, cfg.lt_theta, cfg.lt_span),
            "ST-FR": (index.spends(address), FORWARD, st_fn, cfg.st_span),
        }
        # per kind: list of (origin_ts, tree or fixed rows)
        self._bk_rows: dict[str, list[tuple[int, np.ndarray]]] = {}
        self._fr_trees: dict[str, list[tuple[int, object, dict]]] = {}
        for kind, (origin_ids, direction, theta, span) in self.kind_specs.items():
            origins = [(graph.tx(t).timestamp, t) for t in origin_ids
                       if graph.tx(t).timestamp <= self.horizon_end]
            if direction == BACKWARD:
                rows_list = []
                for ts, origin in origins:
                    tree = build_expansion_tree(graph, origin, direction, theta, span,
                                                branch_cap=cfg.branch_cap)
                    rows_list.append((ts, path_feature_rows(graph, tree.paths())))
                self._bk_rows[kind] = rows_list
            else:
                trees = []
                for ts, origin in origins:
                    tree = build_expansion_tree(graph, origin, direction, theta, span,
                                                as_of=self.horizon_end,
                                                branch_cap=cfg.branch_cap)
                    trees.append((ts, tree, {}))
                self._fr_trees[kind] = trees

    def rows(self, kind: str, as_of: int) -> np.ndarray:
        if kind in self._bk_rows:
            blocks = [rows for ts, rows in self._bk_rows[kind] if ts <= as_of]
        else:
            _, _, theta, span = self.kind_specs[kind]
            blocks = []
            for ts, tree, memo in self._fr_trees[kind]:
                if ts > as_of:
                    continue
                if tree.truncated:
                    # cap fired while building to horizon; re-trace this hour exactly
                    paths = forward_paths(self.graph, tree.origin, theta, span,
                                          as_of=as_of, branch_cap=self.cfg.branch_cap)
                    blocks.append(path_feature_rows(self.graph, paths))
                    continue
                key = tree.node_count_at(as_of)
                if key not in memo:
                    memo[key] = path_feature_rows(self.graph, tree.paths(as_of))
                blocks.append(memo[key])
        if not blocks:
            return np.zeros((0, len(PATH_FEATURES)), dtype=float)
        return np.concatenate(blocks, axis=0)


# ------------------------------------------------------------ sequences

@dataclass
class FeatureSequence:
    address: str
    start: int | None
    matrix: np.ndarray  # (horizon_hours, RAW_WIDTH) float64


class FeatureExtractor:
    def __init__(self, graph: TransactionGraph, index: AddressIndex,
                 path_cfg: PathConfig | None = None,
                 horizon_hours: int = DEFAULT_HORIZON,
                 hour_seconds: int = HOUR_SECONDS):
        self.graph = graph
        self.index = index
        self.path_cfg = path_cfg or PathConfig()
        self.horizon = horizon_hours
        self.hour_seconds = hour_seconds

    def sequence(self, address: str) -> FeatureSequence:
        matrix = np.zeros((self.horizon, RAW_WIDTH), dtype=float)
        activity = AddressActivity(self.graph, self.index, address,
                                   self.horizon, self.hour_seconds)
        if activity.inactive:
            return FeatureSequence(address, None, matrix)

        cache = PathFeatureCache(self.graph, self.index, address, self.path_cfg,
                                 activity.start, self.horizon, self.hour_seconds)
        n_af = len(ADDRESS_FEATURES)
        for t in range(self.horizon):
            as_of = activity.start + (t + 1) * self.hour_seconds - 1
            matrix[t, :n_af] = address_features(activity, t)
            offset = n_af
            for kind in PATH_GROUPS:
                matrix[t, offset:offset + SET_BLOCK_WIDTH] = \
                    aggregate_path_rows(cache.rows(kind, as_of))
                offset += SET_BLOCK_WIDTH
        return FeatureSequence(address, activity.start, matrix)


# ------------------------------------------------------------ persistence

def write_schema_manifest(schema: FeatureSchema, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_manifest(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_schema_manifest(path: str) -> FeatureSchema:
    with open(path, "r", encoding="utf-8") as fh:
        return FeatureSchema.from_manifest(json.load(fh))


def signed_log(x: np.ndarray) -> np.ndarray:
    """sign(x) * log1p(|x|), applied elementwise.

    Monetary columns span six orders of magnitude; without compression a
    z-score keyed to the largest transfers flattens every smaller scale
    to zero and the model cannot tell mid-size flows apart.
    """
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.log1p(np.abs(x))


def write_features_csv(sequences: list[FeatureSequence], schema: FeatureSchema,
                       path: str) -> None:
    """One row per (address, hour), columns per schema, repr-exact floats."""
    idx = schema.raw_indices()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("address,hour," + ",".join(schema.names()) + "\n")
        for seq in sequences:
            for t in range(seq.matrix.shape[0]):
                values = ",".join(repr(float(v)) for v in seq.matrix[t, idx])
                fh.write(f"{seq.address},{t},{values}\n")


def load_features_csv(path: str, schema: FeatureSchema) -> dict[str, np.ndarray]:
    """Read a feature CSV back into per-address matrices.

    The file's columns must match the given schema exactly.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["address", "hour"] or header[2:] != schema.names():
            raise DataError(f"feature file {path!r} does not match the expected schema")
        per_address: dict[str, list[tuple[int, list[float]]]] = {}
        for line in fh:
            parts = line.rstrip("\n").split(",")
            address, hour = parts[0], int(parts[1])
            per_address.setdefault(address, []).append(
                (hour, [float(v) for v in parts[2:]]))
    result = {}
    for address, rows in per_address.items():
        rows.sort(key=lambda r: r[0])
        hours = [r[0] for r in rows]
        if hours != list(range(len(hours))):
            raise DataError(f"feature file {path!r}: non-contiguous hours for {address!r}")
        result[address] = np.array([r[1] for r in rows], dtype=float)
    return result
