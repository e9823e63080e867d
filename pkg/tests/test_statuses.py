import numpy as np
import pytest

from chainwatch.errors import DataError
from chainwatch.statuses import (
    ChangeProfile,
    Normalizer,
    StatusCatalog,
    assign_status,
    build_segment_vectors,
    change_profile,
    cluster_statuses,
    dbscan,
    discover_statuses,
    k_distance_curve,
    segment_importance,
    segment_vector,
    segments_of,
    split_points,
    status_sequence,
    suggest_eps,
)

from oracles import dbscan_reference


# ------------------------------------------------------------- change profile

def test_change_profile_constant_sequences_are_flat():
    seqs = [np.full((6, 3), 2.0), np.full((6, 3), -1.0)]
    profile = change_profile(seqs)
    assert profile.ratios.shape == (6,)
    assert profile.peak == 0.0


def test_change_profile_doubling_feature_peaks_at_its_hour():
    seq = np.ones((8, 1))
    seq[5:] = 2.0
    profile = change_profile([seq])
    assert int(np.argmax(profile.ratios)) == 5
    assert profile.ratios[0] == 0.0


def test_change_profile_two_address_hand_values():
    a = np.array([[1.0, 2.0], [2.0, 2.0], [2.0, 0.0]])
    b = np.array([[1.0, 1.0], [1.0, 1.0], [4.0, 1.0]])
    profile = change_profile([a, b])
    # feature scales: col0 mean|f| = 11/6, col1 mean|f| = 7/6
    # hour 1: only a col0 moves: (1 / (1 + 11/6)) / 4 = 3/34
    # hour 2: a col1 2->0 and b col0 1->4:
    #   (2 / (2 + 7/6) + 3 / (1 + 11/6)) / 4 = (12/19 + 18/17) / 4
    assert profile.ratios[1] == pytest.approx(3 / 34, rel=1e-7)
    assert profile.ratios[2] == pytest.approx((12 / 19 + 18 / 17) / 4, rel=1e-7)


# ---------------------------------------------------------------- split rules

def _profile(values):
    return ChangeProfile(np.asarray(values, dtype=float))


def test_flat_profile_gives_single_segment():
    assert split_points(_profile([0.0] * 12)) == [0, 12]


def test_single_spike_splits_once():
    values = [0.0] * 12
    values[5] = 1.0
    assert split_points(_profile(values), theta=0.5) == [0, 5, 12]


def test_threshold_is_strict():
    values = [0.0] * 12
    values[5] = 1.0
    values[9] = 0.5  # exactly theta * peak: not a split
    assert split_points(_profile(values), theta=0.5) == [0, 5, 12]


def test_adjacent_spikes_keep_the_larger():
    values = [0.0] * 12
    values[5], values[6] = 0.9, 1.0
    assert split_points(_profile(values), theta=0.5, min_len=2) == [0, 6, 12]
    values[5], values[6] = 1.0, 0.9
    assert split_points(_profile(values), theta=0.5, min_len=2) == [0, 5, 12]
    values[5], values[6] = 1.0, 1.0  # tie keeps the earlier
    assert split_points(_profile(values), theta=0.5, min_len=2) == [0, 5, 12]


def test_boundary_hugging_spikes_are_dropped():
    values = [0.0] * 12
    values[1] = 1.0
    values[11] = 0.9
    assert split_points(_profile(values), theta=0.5, min_len=2) == [0, 12]


def test_segments_tile_the_horizon():
    rng = np.random.default_rng(3)
    for _ in range(25):
        values = rng.random(40) * (rng.random(40) < 0.2)
        values[0] = 0.0
        splits = split_points(_profile(values), theta=0.3, min_len=2)
        pairs = segments_of(splits)
        assert splits[0] == 0 and splits[-1] == 40
        assert all(e - b >= 1 for b, e in pairs)
        covered = [h for b, e in pairs for h in range(b, e)]
        assert covered == list(range(40))


# ------------------------------------------------------------ segment vectors

def test_segment_vector_all_ones_importance_is_time_mean():
    seq = np.array([[1.0, 4.0], [3.0, 0.0]])
    assert segment_vector(seq, np.ones(2)).tolist() == [2.0, 2.0]


def test_segment_vector_one_hot_and_scaled():
    seq = np.array([[1.0, 1.0], [3.0, 3.0]])
    one_hot = segment_vector(seq, np.array([0.0, 1.0]))
    assert one_hot.tolist() == [0.0, 2.0]
    scaled = segment_vector(np.array([[1.0], [3.0]]), np.array([0.5]))
    assert scaled.tolist() == [1.0]


def test_segment_vector_validation():
    with pytest.raises(DataError):
        segment_vector(np.zeros((0, 2)), np.ones(2))
    with pytest.raises(DataError):
        segment_vector(np.zeros((2, 2)), np.ones(3))


def test_segment_importance_concentrates_on_signal():
    rng = np.random.default_rng(11)
    labels = np.array([0, 1] * 20)
    seqs = []
    for y in labels:
        seq = rng.normal(0.0, 0.1, size=(10, 3))
        if y:
            seq[5:, 1] += 5.0  # signal only in the late segment
        seqs.append(seq)
    imps = segment_importance(seqs, labels, [0, 5, 10])
    assert len(imps) == 2
    assert int(np.argmax(imps[1])) == 1
    assert imps[1][1] > 0.8


def test_build_segment_vectors_shape():
    seqs = [np.ones((6, 2)), np.full((6, 2), 3.0)]
    vectors = build_segment_vectors(seqs, [0, 2, 6], [np.ones(2), np.full(2, 0.5)])
    assert vectors.shape == (2, 2, 2)
    assert vectors[1, 1].tolist() == [1.5, 1.5]


# -------------------------------------------------------------- normalization

def test_normalizer_idempotence_with_constant_column():
    rng = np.random.default_rng(5)
    pool = rng.normal(size=(50, 4))
    pool[:, 2] = 7.0
    z = Normalizer.fit(pool).transform(pool)
    again = Normalizer.fit(z)
    assert np.allclose(again.transform(z), z, atol=1e-9)
    assert np.allclose(z[:, 2], 0.0)


# --------------------------------------------------------------------- dbscan

def test_dbscan_two_blobs():
    rng = np.random.default_rng(1)
    points = np.concatenate([
        rng.normal(0.0, 0.3, size=(30, 2)),
        rng.normal(10.0, 0.3, size=(30, 2)),
    ])
    labels = dbscan(points, eps=1.5, min_pts=4)
    assert set(labels[:30]) == {0}
    assert set(labels[30:]) == {1}


def test_dbscan_identical_points_form_one_cluster():
    points = np.tile([2.0, -1.0], (5, 1))
    assert dbscan(points, eps=0.5, min_pts=5).tolist() == [0] * 5


def test_dbscan_isolated_point_is_noise():
    points = np.array([[0.0], [0.1], [0.2], [50.0]])
    labels = dbscan(points, eps=0.5, min_pts=3)
    assert labels.tolist() == [0, 0, 0, -1]


def test_dbscan_chain_with_inclusive_radius():
    points = np.array([[0.0], [1.0], [2.0], [3.0]])
    assert dbscan(points, eps=1.0, min_pts=3).tolist() == [0, 0, 0, 0]


def test_dbscan_matches_reference_on_random_sets():
    rng = np.random.default_rng(77)
    for _ in range(40):
        d = int(rng.integers(1, 4))
        n_blob = int(rng.integers(2, 40))
        blobs = [rng.normal(rng.uniform(-4, 4, size=d), rng.uniform(0.1, 0.8), size=(n_blob, d))
                 for _ in range(int(rng.integers(1, 4)))]
        scatter = rng.uniform(-6, 6, size=(int(rng.integers(0, 15)), d))
        points = np.concatenate(blobs + [scatter])
        if rng.random() < 0.3:
            points = np.concatenate([points, points[:3]])  # duplicates
        eps = float(rng.uniform(0.2, 1.5))
        min_pts = int(rng.integers(1, 6))
        ours = dbscan(points, eps, min_pts)
        ref = dbscan_reference(points, eps, min_pts)
        assert np.array_equal(ours, ref)


# ------------------------------------------------------------ status catalogs

def _blob_vectors(rng, n_per=40, gap=8.0, d=4):
    return np.concatenate([
        rng.normal(0.0, 0.4, size=(n_per, d)),
        rng.normal(gap, 0.4, size=(n_per, d)),
    ])


def test_cluster_statuses_two_blobs():
    rng = np.random.default_rng(2)
    vectors = _blob_vectors(rng)
    catalog, labels = cluster_statuses(vectors, eps=0.8, min_pts=4)
    assert catalog.n_statuses == 2
    assert catalog.noise_id == 2
    assert set(labels[:40]) <= {0, 2} and 0 in set(labels[:40])
    assert set(labels[40:]) <= {1, 2} and 1 in set(labels[40:])
    # centers are the means of their normalized members
    normalized = catalog.normalizer.transform(vectors)
    member0 = normalized[labels == 0]
    assert np.allclose(catalog.centers[0], member0.mean(axis=0))


def test_cluster_statuses_all_noise_instructs_retuning():
    rng = np.random.default_rng(3)
    scattered = rng.uniform(-100, 100, size=(12, 3))
    with pytest.raises(DataError, match="eps"):
        cluster_statuses(scattered, eps=1e-6, min_pts=3)


def test_cluster_statuses_auto_eps_separates_blobs():
    rng = np.random.default_rng(12)
    vectors = _blob_vectors(rng)
    catalog, labels = cluster_statuses(vectors, eps=None, min_pts=4)
    assert catalog.n_statuses == 2
    assert catalog.eps > 0.0
    # the resolved radius reproduces the same partition
    again, labels_again = cluster_statuses(vectors, eps=catalog.eps, min_pts=4)
    assert np.array_equal(labels, labels_again)
    assert again.eps == catalog.eps


def test_assign_status_center_and_held_out():
    rng = np.random.default_rng(4)
    vectors = _blob_vectors(rng)
    catalog, _ = cluster_statuses(vectors, eps=0.8, min_pts=4)
    for cid in range(2):
        raw_center = catalog.centers[cid] * catalog.normalizer.std + catalog.normalizer.mean
        status, dist = assign_status(raw_center, catalog)
        assert status == cid
        assert dist < 1e-9
    held_out = rng.normal(8.0, 0.4, size=4)
    status, dist = assign_status(held_out, catalog)
    assert status == 1
    far, far_dist = assign_status(np.full(4, 1e4), catalog)
    assert far in (0, 1)
    assert far_dist > 10.0


def test_assign_status_width_mismatch():
    rng = np.random.default_rng(6)
    catalog, _ = cluster_statuses(_blob_vectors(rng), eps=0.8, min_pts=4)
    with pytest.raises(DataError, match="width"):
        assign_status(np.zeros(3), catalog)


def test_status_tree_matches_nearest_center_on_held_out():
    rng = np.random.default_rng(7)
    catalog, _ = cluster_statuses(_blob_vectors(rng, n_per=60), eps=0.8, min_pts=4)
    held_out = np.concatenate([
        rng.normal(0.0, 0.4, size=(50, 4)),
        rng.normal(8.0, 0.4, size=(50, 4)),
    ])
    normalized = catalog.normalizer.transform(held_out)
    tree_ids = catalog.tree.predict_class(normalized)
    center_dist = ((normalized[:, None, :] - catalog.centers[None, :, :]) ** 2).sum(axis=2)
    nearest = center_dist.argmin(axis=1)
    assert (tree_ids == nearest).mean() >= 0.95


def test_catalog_json_round_trip():
    rng = np.random.default_rng(8)
    vectors = _blob_vectors(rng)
    catalog, _ = cluster_statuses(
        vectors, eps=0.8, min_pts=4,
        splits=[0, 5, 12], importances=[np.ones(4), np.full(4, 0.5)])
    restored = StatusCatalog.from_json(catalog.to_json())
    assert restored.splits == [0, 5, 12]
    assert restored.noise_id == catalog.noise_id
    probe = rng.normal(4.0, 2.0, size=(10, 4))
    for row in probe:
        assert assign_status(row, restored) == assign_status(row, catalog)


def test_catalog_from_json_rejects_garbage():
    with pytest.raises(DataError, match="catalog"):
        StatusCatalog.from_json({"splits": [0]})


# ------------------------------------------------------------- k-distance fit

def test_k_distance_curve_is_ascending():
    rng = np.random.default_rng(9)
    points = rng.normal(size=(30, 2))
    curve = k_distance_curve(points, 3)
    assert len(curve) == 30
    assert (np.diff(curve) >= 0).all()
    with pytest.raises(DataError):
        k_distance_curve(points, 30)


def test_suggest_eps_clusters_the_blobs_it_was_tuned_on():
    rng = np.random.default_rng(10)
    points = np.concatenate([
        rng.normal(0.0, 0.1, size=(30, 2)),
        rng.normal(10.0, 0.1, size=(30, 2)),
    ])
    eps = suggest_eps(points, min_pts=4)
    assert 0.0 < eps < 5.0
    labels = dbscan(points, eps=eps, min_pts=4)
    clusters = {l for l in labels if l >= 0}
    assert len(clusters) == 2


# ------------------------------------------------------------ full discovery

def _population(rng, n_per_type=15, horizon=12):
    # stable positive levels; the ratio statistic assumes features do not
    # hover at zero, which real count/amount features satisfy
    seqs, labels = [], []
    for kind in (0, 1):
        for _ in range(n_per_type):
            seq = rng.normal(5.0, 0.05, size=(horizon, 2))
            if kind:
                seq[:, 0] += 1.0
                seq[6:, 0] += 9.0  # population-wide jump at hour 6
            seqs.append(seq)
            labels.append(kind)
    return seqs, np.array(labels)


def test_discover_statuses_end_to_end():
    rng = np.random.default_rng(12)
    seqs, labels = _population(rng)
    discovery = discover_statuses(seqs, labels, eps=1.0, min_pts=4, theta=0.3)
    assert discovery.splits[0] == 0 and discovery.splits[-1] == 12
    assert 6 in discovery.splits
    n_segments = len(discovery.splits) - 1
    assert discovery.status_ids.shape == (30, n_segments)
    assert discovery.vectors.shape == (30, n_segments, 2)
    assert discovery.catalog.n_statuses >= 2

    # an unseen address of each kind routes through the persisted catalog
    fresh, fresh_labels = _population(rng, n_per_type=1)
    ids_b, dist_b = status_sequence(fresh[0], discovery.catalog)
    ids_m, dist_m = status_sequence(fresh[1], discovery.catalog)
    assert ids_b.shape == (n_segments,) and dist_b.shape == (n_segments,)
    assert not np.array_equal(ids_b, ids_m)


def test_status_sequence_requires_fitted_splits():
    rng = np.random.default_rng(13)
    catalog, _ = cluster_statuses(_blob_vectors(rng), eps=0.8, min_pts=4)
    with pytest.raises(DataError, match="split"):
        status_sequence(np.zeros((12, 4)), catalog)
