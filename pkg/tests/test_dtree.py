import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from chainwatch.dtree import DecisionTree, TreeConfig
from chainwatch.errors import DataError

from oracles import best_split_bruteforce


def test_perfect_single_feature_split():
    x = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    tree = DecisionTree(TreeConfig(min_samples_split=2)).fit(x, y)
    assert tree.nodes[0].feature == 0
    assert tree.nodes[0].threshold == 6.0
    np.testing.assert_array_equal(tree.predict(x), [0, 0, 0, 1, 1, 1])
    assert tree.importances.tolist() == [1.0]


def test_root_split_matches_bruteforce():
    rng = np.random.default_rng(42)
    for _ in range(30):
        n, d = 40, 4
        x = rng.normal(size=(n, d))
        y = (x[:, rng.integers(0, d)] + 0.3 * rng.normal(size=n) > 0).astype(int)
        if y.min() == y.max():
            continue
        w = np.ones(n)
        tree = DecisionTree(TreeConfig(max_depth=1, min_samples_split=2)).fit(x, y)
        expected = best_split_bruteforce(x, y, w)
        assert expected is not None
        gain, feature, threshold = expected
        assert tree.nodes[0].feature == feature
        assert tree.nodes[0].threshold == pytest.approx(threshold)


def test_ties_prefer_lowest_feature_then_threshold():
    # duplicated informative column: the lower index must win
    base = np.array([0.0, 1.0, 2.0, 3.0])
    x = np.stack([base, base], axis=1)
    y = np.array([0, 0, 1, 1])
    tree = DecisionTree(TreeConfig(min_samples_split=2)).fit(x, y)
    assert tree.nodes[0].feature == 0

    # two thresholds with identical gain on one feature: lowest wins
    x2 = np.array([[0.0], [1.0], [2.0], [3.0]])
    y2 = np.array([0, 1, 0, 1])
    tree2 = DecisionTree(TreeConfig(max_depth=1, min_samples_split=2)).fit(x2, y2)
    assert tree2.nodes[0].threshold == 0.5


def test_permutation_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(60, 5))
    y = (x[:, 2] > 0.2).astype(int)
    ref = DecisionTree(TreeConfig(min_samples_split=4)).fit(x, y).to_json()
    for seed in range(5):
        perm = np.random.default_rng(seed).permutation(len(x))
        shuffled = DecisionTree(TreeConfig(min_samples_split=4)).fit(x[perm], y[perm]).to_json()
        assert shuffled == ref


def test_class_weights_shift_leaf_distributions():
    x = np.array([[0.0], [0.1], [0.2], [5.0]])
    y = np.array([0, 0, 0, 1])
    plain = DecisionTree(TreeConfig(max_depth=0)).fit(x, y)
    assert plain.predict(np.array([[0.0]]))[0] == pytest.approx(0.25)
    boosted = DecisionTree(TreeConfig(max_depth=0, class_weights={0: 1.0, 1: 3.0})).fit(x, y)
    assert boosted.predict(np.array([[0.0]]))[0] == pytest.approx(0.5)


def test_depth_and_min_split_limits():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(200, 3))
    y = rng.integers(0, 2, size=200)
    tree = DecisionTree(TreeConfig(max_depth=3, min_samples_split=50)).fit(x, y)

    def depth_of(node_id, depth=0):
        node = tree.nodes[node_id]
        if node.feature == -1:
            return depth
        return max(depth_of(node.left, depth + 1), depth_of(node.right, depth + 1))

    assert depth_of(0) <= 3
    # every internal node must have carried at least min_samples_split of weight
    for node in tree.nodes:
        if node.feature != -1:
            assert node.weight >= 50


def test_stump_importance_is_zero():
    x = np.array([[1.0], [1.0], [1.0]])
    y = np.array([0, 1, 0])
    tree = DecisionTree().fit(x, y)  # constant feature: nothing to split on
    assert tree.nodes[0].feature == -1
    assert tree.importances.tolist() == [0.0]


def test_leaf_probability_is_weighted_fraction():
    x = np.array([[0.0], [1.0], [2.0], [3.0], [10.0]])
    y = np.array([0, 0, 1, 0, 1])
    tree = DecisionTree(TreeConfig(max_depth=1, min_samples_split=2)).fit(x, y)
    # best gain splits at 1.5: left leaf pure negative, right leaf 2/3 positive
    assert tree.nodes[0].threshold == 1.5
    proba = tree.predict(x)
    np.testing.assert_allclose(np.sort(np.unique(proba)), [0.0, 2.0 / 3.0])


def test_multiclass_predicts_all_classes():
    rng = np.random.default_rng(0)
    centers = np.array([[0.0, 0.0], [5.0, 5.0], [0.0, 5.0]])
    x = np.concatenate([rng.normal(c, 0.3, size=(30, 2)) for c in centers])
    y = np.repeat([0, 1, 2], 30)
    tree = DecisionTree(TreeConfig(min_samples_split=5)).fit(x, y)
    assert (tree.predict_class(x) == y).mean() == 1.0
    proba = tree.predict_proba(x)
    assert proba.shape == (90, 3)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)


def test_json_round_trip_exact():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(80, 6))
    y = (x[:, 1] * x[:, 4] > 0).astype(int)
    tree = DecisionTree(TreeConfig(class_weights={0: 1.0, 1: 2.0})).fit(x, y)
    doc = tree.to_json()
    restored = DecisionTree.from_json(json.loads(json.dumps(doc)))
    assert restored.to_json() == doc
    np.testing.assert_array_equal(restored.predict(x), tree.predict(x))


def test_errors():
    with pytest.raises(DataError):
        DecisionTree().fit(np.zeros((0, 2)), np.zeros(0, dtype=int))
    with pytest.raises(DataError):
        DecisionTree().fit(np.array([[np.nan]]), np.array([0]))
    with pytest.raises(DataError):
        DecisionTree().predict(np.zeros((1, 2)))
    tree = DecisionTree().fit(np.zeros((12, 2)), np.array([0, 1] * 6))
    with pytest.raises(DataError, match="expected 2 features"):
        tree.predict(np.zeros((1, 5)))


@given(
    x=hnp.arrays(np.float64, shape=st.tuples(st.integers(12, 40), st.integers(1, 4)),
                 elements=st.floats(-50, 50)),
    bits=st.lists(st.integers(0, 1), min_size=40, max_size=40),
)
@settings(max_examples=50, deadline=None)
def test_fitted_tree_properties(x, bits):
    y = np.array(bits[: len(x)], dtype=int)
    tree = DecisionTree(TreeConfig(max_depth=4, min_samples_split=4)).fit(x, y)
    proba = tree.predict(x)
    assert ((0.0 <= proba) & (proba <= 1.0)).all()
    total = tree.importances.sum()
    assert total == pytest.approx(1.0) or total == 0.0
