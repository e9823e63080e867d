"""Status discovery over hourly feature sequences.

The training population's average change ratio per hour locates split
points shared by every address. Each resulting segment gets a decision
tree fit on the segment's time-mean features; the tree's importances
weight the per-address segment means into segment vectors. Vectors are
z-scored, clustered with DBSCAN into global statuses, and a multiclass
status tree plus the cluster centers are kept for assignment later.

DBSCAN noise earns a dedicated extra status id (one past the last
cluster) so downstream consumers can embed it; the assignment tree is
fit without noise and therefore always answers with a real cluster,
alongside the distance to that cluster's center for flagging outliers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dtree import DecisionTree, TreeConfig
from .errors import DataError

CHANGE_EPS = 1e-8
DEFAULT_SPLIT_THETA = 0.3
DEFAULT_MIN_SEGMENT_HOURS = 2


@dataclass(frozen=True)
class ChangeProfile:
    ratios: np.ndarray  # one mean change ratio per hour; hour 0 is 0

    @property
    def peak(self) -> float:
        return float(self.ratios.max())


def change_profile(sequences) -> ChangeProfile:
    """Mean |f_j - f_{j-1}| / (|f_{j-1}| + scale_f) over addresses and features.

    scale_f is the population mean magnitude of feature f. Without the
    floor, a feature's first move off exact zero divides by epsilon and
    that single hour dwarfs every real change in the profile.
    """
    stack = np.stack([np.asarray(s, dtype=float) for s in sequences])
    if stack.ndim != 3 or stack.shape[1] < 1:
        raise DataError("change profile needs equally shaped feature sequences")
    scale = np.abs(stack).mean(axis=(0, 1))
    prev = stack[:, :-1, :]
    ratios = np.abs(stack[:, 1:, :] - prev) / (np.abs(prev) + scale + CHANGE_EPS)
    profile = np.concatenate([[0.0], ratios.mean(axis=(0, 2))])
    return ChangeProfile(ratios=profile)


def split_points(profile: ChangeProfile, theta: float = DEFAULT_SPLIT_THETA,
                 min_len: int = DEFAULT_MIN_SEGMENT_HOURS) -> list[int]:
    """Hours whose change ratio exceeds theta times the peak, plus 0 and T.

    Neighbours closer than min_len are merged keeping the larger-ratio
    one (ties keep the earlier). The implicit boundaries act as
    unremovable splits, so a split hugging either end is dropped too.
    """
    if not 0.0 < theta < 1.0:
        raise DataError("split theta must sit strictly between 0 and 1")
    ratios = profile.ratios
    horizon = len(ratios)
    if profile.peak <= 0.0:
        return [0, horizon]

    bar = theta * profile.peak
    items = [(0, np.inf)]
    items += [(j, float(ratios[j])) for j in range(1, horizon) if ratios[j] > bar]
    items.append((horizon, np.inf))

    kept = [items[0]]
    for j, c in items[1:]:
        if j - kept[-1][0] < min_len:
            if c > kept[-1][1]:
                kept[-1] = (j, c)  # gap to the previous kept split only grows
        else:
            kept.append((j, c))
    return [j for j, _ in kept]


def segments_of(splits: list[int]) -> list[tuple[int, int]]:
    return [(splits[k], splits[k + 1]) for k in range(len(splits) - 1)]


def segment_importance(sequences, labels, splits: list[int],
                       tree_config: TreeConfig | None = None) -> list[np.ndarray]:
    """One importance vector per segment, from a tree on time-mean features."""
    stack = np.stack([np.asarray(s, dtype=float) for s in sequences])
    y = np.asarray(labels, dtype=int)
    if len(stack) != len(y):
        raise DataError("one label per sequence required")
    out = []
    for b, e in segments_of(splits):
        means = stack[:, b:e, :].mean(axis=1)
        tree = DecisionTree(tree_config or TreeConfig()).fit(means, y)
        out.append(np.asarray(tree.importances, dtype=float))
    return out


def segment_vector(seq_slice: np.ndarray, importance: np.ndarray) -> np.ndarray:
    seq_slice = np.asarray(seq_slice, dtype=float)
    importance = np.asarray(importance, dtype=float)
    if seq_slice.ndim != 2 or len(seq_slice) == 0:
        raise DataError("segment slice must be a non-empty matrix")
    if seq_slice.shape[1] != len(importance):
        raise DataError("importance width must match the feature width")
    return importance * seq_slice.mean(axis=0)


def build_segment_vectors(sequences, splits: list[int],
                          importances: list[np.ndarray]) -> np.ndarray:
    """(n_addresses, n_segments, d) stack of importance-weighted means."""
    pairs = segments_of(splits)
    if len(pairs) != len(importances):
        raise DataError("one importance vector per segment required")
    rows = []
    for seq in sequences:
        seq = np.asarray(seq, dtype=float)
        rows.append([segment_vector(seq[b:e], importances[k])
                     for k, (b, e) in enumerate(pairs)])
    return np.asarray(rows, dtype=float)


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray  # zero-variance dimensions keep divisor 1

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalizer":
        x = np.asarray(x, dtype=float)
        std = x.std(axis=0)
        return cls(mean=x.mean(axis=0), std=np.where(std == 0.0, 1.0, std))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Normalizer":
        return cls(np.asarray(obj["mean"], dtype=float),
                   np.asarray(obj["std"], dtype=float))


def _pairwise_distances(points: np.ndarray) -> np.ndarray:
    n, d = points.shape
    if n * n * d <= 50_000_000:
        diff = points[:, None, :] - points[None, :, :]
        return np.sqrt((diff ** 2).sum(axis=-1))
    # large point sets: the (n, n, d) difference tensor would not fit
    sq = (points ** 2).sum(axis=1)
    return np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * points @ points.T, 0.0))


def _neighbourhoods(points: np.ndarray, eps: float) -> list[np.ndarray]:
    dist = _pairwise_distances(points)
    return [np.flatnonzero(dist[i] <= eps) for i in range(len(points))]


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering; -1 marks noise, clusters number by discovery.

    Index-ordered seed scan with breadth-first expansion; neighbourhoods
    are closed balls including the point itself, and min_pts counts it.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise DataError("dbscan expects a 2d point matrix")
    n = len(points)
    if n == 0:
        return np.empty(0, dtype=int)
    if eps <= 0 or min_pts < 1:
        raise DataError("dbscan needs eps > 0 and min_pts >= 1")

    neighbourhoods = _neighbourhoods(points, eps)
    core = np.array([len(nb) >= min_pts for nb in neighbourhoods])
    labels = np.full(n, -2, dtype=int)
    cluster = 0
    for seed in range(n):
        if labels[seed] != -2:
            continue
        if not core[seed]:
            labels[seed] = -1
            continue
        labels[seed] = cluster
        queue = deque(int(j) for j in neighbourhoods[seed] if j != seed)
        while queue:
            j = queue.popleft()
            if labels[j] == -1:
                labels[j] = cluster  # noise becomes a border point
                continue
            if labels[j] != -2:
                continue
            labels[j] = cluster
            if core[j]:
                queue.extend(int(k) for k in neighbourhoods[j]
                             if labels[k] in (-2, -1))
        cluster += 1
    return labels


def k_distance_curve(points: np.ndarray, k: int) -> np.ndarray:
    """Ascending distance to the k-th nearest neighbour (self excluded)."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    if not 1 <= k < n:
        raise DataError("k must satisfy 1 <= k < number of points")
    dist = _pairwise_distances(points)
    kth = np.sort(dist, axis=1)[:, k]  # column 0 is the self distance
    return np.sort(kth)


def suggest_eps(points: np.ndarray, min_pts: int) -> float:
    """Elbow of the k-distance curve: the point farthest below the chord
    between the curve's endpoints.

    Raw max-jump reading breaks on real data, where the largest gap sits
    between the two most extreme outliers and the suggestion then swallows
    everything into one cluster. A zero radius only matches duplicates, so
    the suggestion never drops below the smallest positive distance.
    """
    curve = k_distance_curve(points, max(1, min_pts - 1))
    if len(curve) < 2:
        return float(curve[-1])
    n = len(curve)
    chord = curve[0] + (curve[-1] - curve[0]) * np.arange(n) / (n - 1)
    eps = float(curve[int(np.argmax(chord - curve))])
    if eps == 0.0:
        positive = curve[curve > 0]
        eps = float(positive[0]) if len(positive) else 0.0
    return eps


@dataclass
class StatusCatalog:
    splits: list[int]
    importances: list[np.ndarray]
    normalizer: Normalizer
    centers: np.ndarray            # (K, d) means of normalized members
    tree: DecisionTree
    eps: float
    min_pts: int

    @property
    def n_statuses(self) -> int:
        return len(self.centers)

    @property
    def noise_id(self) -> int:
        return len(self.centers)

    def to_json(self) -> dict:
        return {
            "splits": list(self.splits),
            "importances": [v.tolist() for v in self.importances],
            "normalizer": self.normalizer.to_json(),
            "centers": self.centers.tolist(),
            "noise_id": self.noise_id,
            "eps": self.eps,
            "min_pts": self.min_pts,
            "tree": self.tree.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StatusCatalog":
        try:
            return cls(
                splits=[int(j) for j in obj["splits"]],
                importances=[np.asarray(v, dtype=float) for v in obj["importances"]],
                normalizer=Normalizer.from_json(obj["normalizer"]),
                centers=np.asarray(obj["centers"], dtype=float),
                tree=DecisionTree.from_json(obj["tree"]),
                eps=float(obj["eps"]),
                min_pts=int(obj["min_pts"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed status catalog: {exc}") from None


def cluster_statuses(vectors: np.ndarray, eps: float | None, min_pts: int, *,
                     splits: list[int] | None = None,
                     importances: list[np.ndarray] | None = None,
                     tree_config: TreeConfig | None = None) -> tuple[StatusCatalog, np.ndarray]:
    """Normalize, cluster, and fit the status tree.

    Pass eps=None to pick the radius from the k-distance elbow of the
    normalized vectors; the catalog records whatever value was used.
    Returns the catalog and the per-vector status ids, with noise mapped
    to the dedicated id one past the last cluster.
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or len(vectors) < min_pts:
        raise DataError("status clustering needs at least min_pts segment vectors")
    normalizer = Normalizer.fit(vectors)
    normalized = normalizer.transform(vectors)
    if eps is None:
        eps = suggest_eps(normalized, min_pts)
    raw = dbscan(normalized, eps, min_pts)
    n_clusters = int(raw.max()) + 1 if (raw >= 0).any() else 0
    if n_clusters == 0:
        raise DataError(
            "every segment vector came out as DBSCAN noise; retune eps and "
            "min_pts (see the k-distance elbow helper)")

    centers = np.stack([normalized[raw == c].mean(axis=0) for c in range(n_clusters)])
    member = raw >= 0
    # with a single cluster the tree is a stump answering 0 everywhere
    tree = DecisionTree(tree_config or TreeConfig()).fit(normalized[member], raw[member])
    labels = np.where(raw == -1, n_clusters, raw)
    catalog = StatusCatalog(
        splits=list(splits) if splits is not None else [],
        importances=list(importances) if importances is not None else [],
        normalizer=normalizer,
        centers=centers,
        tree=tree,
        eps=float(eps),
        min_pts=int(min_pts),
    )
    return catalog, labels


def assign_status(vector: np.ndarray, catalog: StatusCatalog) -> tuple[int, float]:
    """Tree-routed status id plus the distance to that status' center.

    Trees have no reject option, so even far outliers get an id; the
    distance is the caller's outlier signal.
    """
    vector = np.asarray(vector, dtype=float)
    if vector.shape != catalog.normalizer.mean.shape:
        raise DataError(
            f"segment vector width {vector.shape} does not match catalog "
            f"width {catalog.normalizer.mean.shape}")
    normalized = catalog.normalizer.transform(vector[None, :])
    status = int(catalog.tree.predict_class(normalized)[0])
    distance = float(np.sqrt(((normalized[0] - catalog.centers[status]) ** 2).sum()))
    return status, distance


def status_sequence(sequence: np.ndarray, catalog: StatusCatalog) -> tuple[np.ndarray, np.ndarray]:
    """Assign a status per catalog segment of one address' sequence."""
    if not catalog.splits or not catalog.importances:
        raise DataError("catalog carries no split list; fit it with splits")
    sequence = np.asarray(sequence, dtype=float)
    ids, distances = [], []
    for k, (b, e) in enumerate(segments_of(catalog.splits)):
        status, dist = assign_status(
            segment_vector(sequence[b:e], catalog.importances[k]), catalog)
        ids.append(status)
        distances.append(dist)
    return np.asarray(ids, dtype=int), np.asarray(distances, dtype=float)


@dataclass
class StatusDiscovery:
    profile: ChangeProfile
    splits: list[int]
    importances: list[np.ndarray] = field(repr=False, default_factory=list)
    vectors: np.ndarray = field(repr=False, default=None)   # (n, m, d)
    status_ids: np.ndarray = field(default=None)             # (n, m), noise id included
    catalog: StatusCatalog = None


def discover_statuses(sequences, labels, eps: float | None, min_pts: int, *,
                      theta: float = DEFAULT_SPLIT_THETA,
                      min_len: int = DEFAULT_MIN_SEGMENT_HOURS,
                      tree_config: TreeConfig | None = None,
                      profile_sequences=None) -> StatusDiscovery:
    """Fit the whole status stage on a training population.

    `profile_sequences` optionally supplies the sequences the split grid
    is derived from; vectors and clusters still come from `sequences`.
    Callers that rescale features for cluster geometry pass the unscaled
    sequences here, since the change profile is a relative measure and
    rescaling would distort it.
    """
    sequences = [np.asarray(s, dtype=float) for s in sequences]
    if profile_sequences is None:
        profile_basis = sequences
    else:
        profile_basis = [np.asarray(s, dtype=float) for s in profile_sequences]
    profile = change_profile(profile_basis)
    splits = split_points(profile, theta=theta, min_len=min_len)
    importances = segment_importance(sequences, labels, splits, tree_config)
    vectors = build_segment_vectors(sequences, splits, importances)
    n, m, d = vectors.shape
    catalog, flat_ids = cluster_statuses(
        vectors.reshape(n * m, d), eps, min_pts,
        splits=splits, importances=importances, tree_config=tree_config)
    return StatusDiscovery(
        profile=profile,
        splits=splits,
        importances=importances,
        vectors=vectors,
        status_ids=flat_ids.reshape(n, m),
        catalog=catalog,
    )
