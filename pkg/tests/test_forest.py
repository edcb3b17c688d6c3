import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meshqoe.features import LOD_FEATURE
from meshqoe.forest import (
    LEAF, Forest, TrainConfig, Tree, constant_forest, feature_importance, train_forest, train_tree,
)

FULL = TrainConfig(n_trees=1, m_try=5, bootstrap=False)


def random_xy(rng, n, noise=0.0):
    X = rng.uniform(0, 1, size=(n, 5))
    y = 1 + 4 * X[:, 2] ** 2 + X[:, 1] + noise * rng.normal(size=n)
    return X, y


def test_separable_pair():
    X = np.zeros((2, 5))
    X[1, 3] = 1.0
    tree = train_tree(X, [0.0, 1.0], FULL, np.random.default_rng(0))
    assert tree.n_nodes == 3 and tree.feature[0] == 3 and tree.threshold[0] == 0.5
    assert tree.predict(X).tolist() == [0.0, 1.0]


def test_pure_node_is_leaf(rng):
    X = rng.uniform(size=(10, 5))
    tree = train_tree(X, np.full(10, 3.7), FULL, rng)
    assert tree.n_nodes == 1 and tree.value[0] == pytest.approx(3.7)


def test_empty_rejected(rng):
    with pytest.raises(ValueError):
        train_tree(np.empty((0, 5)), [], FULL, rng)
    with pytest.raises(ValueError):
        train_forest(np.empty((0, 5)), [])


@pytest.mark.parametrize("bad", [0, 6])
def test_m_try_range(bad):
    with pytest.raises(ValueError):
        TrainConfig(m_try=bad)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25)
def test_memorises_distinct_rows(seed):
    rng = np.random.default_rng(seed)
    X, y = random_xy(rng, 20, noise=0.3)
    tree = train_tree(X, y, FULL, rng)
    np.testing.assert_allclose(tree.predict(X), y, rtol=0, atol=1e-12)


def test_tie_break_prefers_lowest_feature():
    # features 1 and 3 separate the targets equally well
    X = np.zeros((4, 5))
    X[2:, 1] = 1.0
    X[2:, 3] = 1.0
    tree = train_tree(X, [1.0, 1.0, 2.0, 2.0], FULL, np.random.default_rng(0))
    assert tree.feature[0] == 1


def test_min_samples_leaf_and_depth(rng):
    X, y = random_xy(rng, 80, noise=0.2)
    t = train_tree(X, y, TrainConfig(m_try=5, min_samples_leaf=5), rng)
    assert t.n_samples[t.feature == LEAF].min() >= 5
    t = train_tree(X, y, TrainConfig(m_try=5, max_depth=2), rng)
    assert t.n_nodes <= 7


def test_single_tree_forest_is_cart(rng):
    X, y = random_xy(rng, 60, noise=0.2)
    forest = train_forest(X, y, TrainConfig(n_trees=1, m_try=5, bootstrap=False, seed=7))
    cart = train_tree(X, y, TrainConfig(m_try=5), np.random.default_rng(999))
    Q = rng.uniform(-0.2, 1.2, size=(1000, 5))
    np.testing.assert_array_equal(forest.predict(Q), cart.predict(Q))


def test_forest_determinism_serial_and_parallel(rng):
    X, y = random_xy(rng, 50, noise=0.2)
    cfg = TrainConfig(n_trees=12, seed=3)
    a = train_forest(X, y, cfg)
    b = train_forest(X, y, cfg)
    c = train_forest(X, y, cfg, n_jobs=2)
    assert a == b == c
    assert a != train_forest(X, y, TrainConfig(n_trees=12, seed=4))


def test_bootstrap_unique_fraction(rng):
    X, y = random_xy(rng, 256, noise=0.2)
    forest = train_forest(X, y, TrainConfig(n_trees=100, seed=1, max_depth=1))
    unique = [1 - len(o) / 256 for o in forest.oob_indices]
    # 1 - (1 - 1/K)^K at K = 256
    assert np.mean(unique) == pytest.approx(1 - (1 - 1 / 256) ** 256, abs=0.03)
    assert all(t.n_train == 256 for t in forest.trees)


def test_mean_of_trees():
    assert constant_forest(4.2).predict(np.ones(5))[0] == pytest.approx(4.2)
    two = Forest(constant_forest(3.0).trees + constant_forest(5.0).trees, TrainConfig(n_trees=2),
                 np.full(5, 0.2))
    assert two.predict(np.ones(5))[0] == 4.0


@given(st.lists(st.floats(-10, 10), min_size=5, max_size=5))
@settings(max_examples=40)
def test_prediction_within_leaf_hull(synthetic_forest, x):
    leaves = np.concatenate([t.leaf_values() for t in synthetic_forest.trees])
    p = synthetic_forest.predict(np.array(x))[0]
    assert leaves.min() - 1e-12 <= p <= leaves.max() + 1e-12


def test_importances_normalised(synthetic_forest):
    imp = synthetic_forest.importances
    assert np.all(imp >= 0) and abs(imp.sum() - 1) <= 1e-9
    assert not synthetic_forest.importances_degenerate


def test_importance_single_informative_feature(rng):
    X = rng.uniform(0, 1, size=(64, 5))
    X[:, LOD_FEATURE] = rng.choice([0.2, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95], size=64)
    y = np.where(X[:, LOD_FEATURE] <= 0.5, 4.5, 2.0)
    f = train_forest(X, y, TrainConfig(n_trees=10, m_try=5, seed=0))
    np.testing.assert_array_equal(f.importances, np.eye(5)[LOD_FEATURE])


def test_degenerate_importances(rng):
    f = train_forest(rng.uniform(size=(20, 5)), np.full(20, 2.0), TrainConfig(n_trees=3))
    assert f.importances_degenerate
    np.testing.assert_array_equal(f.importances, np.full(5, 0.2))


def _route(tree, X):
    """Sample indices reaching each node, by direct traversal."""
    reach = {0: np.arange(len(X))}
    for k in range(tree.n_nodes):
        if tree.feature[k] == LEAF:
            continue
        idx = reach[k]
        go_left = X[idx, tree.feature[k]] <= tree.threshold[k]
        reach[tree.left[k]] = idx[go_left]
        reach[tree.right[k]] = idx[~go_left]
    return reach


def _sse(v):
    return float(((v - v.mean()) ** 2).sum())


def test_split_log_matches_recomputation(rng):
    X, y = random_xy(rng, 120, noise=0.3)
    forest = train_forest(X, y, TrainConfig(n_trees=8, m_try=2, bootstrap=False, seed=5))
    raw, _ = feature_importance(forest.trees, normalize=False)
    per_tree_total = []
    for t in forest.trees:
        reach = _route(t, X)
        for k in range(t.n_nodes):
            assert t.n_samples[k] == len(reach[k])
            if t.feature[k] != LEAF:
                li, ri = reach[t.left[k]], reach[t.right[k]]
                d = (_sse(y[reach[k]]) - _sse(y[li]) - _sse(y[ri])) / len(reach[k])
                assert t.delta_mse[k] == pytest.approx(d, rel=1e-9, abs=1e-12)
        leaves = np.nonzero(t.feature == LEAF)[0]
        per_tree_total.append((_sse(y) - sum(_sse(y[reach[k]]) for k in leaves)) / len(y))
    assert raw.sum() == pytest.approx(np.mean(per_tree_total), rel=1e-9)


def test_json_round_trip(tmp_path, synthetic_forest, rng):
    p = tmp_path / "model.json"
    synthetic_forest.save(p)
    back = Forest.load(p)
    assert back == synthetic_forest
    Q = rng.uniform([200, 4, 0, 0, 0], [2e5, 20, 1, 100, 120], size=(500, 5))
    np.testing.assert_array_equal(back.predict(Q), synthetic_forest.predict(Q))


def test_oob_rmse_finite(synthetic, synthetic_forest):
    X, y = synthetic.arrays()
    assert 0 < synthetic_forest.oob_rmse(X, y) < 1.0
