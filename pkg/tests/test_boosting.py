import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hedonia.boosting import GbtConfig, _best_split, fit_tree, gbt_fit, gbt_predict


def fixtures():
    """Five small regression problems of different shape."""
    rng = np.random.default_rng(0)
    X1 = rng.uniform(size=(150, 3))
    yield X1, X1 @ [1.0, -2.0, 0.5] + 0.1 * rng.normal(size=150)
    X2 = rng.normal(size=(120, 2))
    yield X2, np.sin(3 * X2[:, 0]) * X2[:, 1]
    X3 = rng.integers(0, 4, size=(100, 4)).astype(float)  # heavy ties
    yield X3, X3[:, 0] * X3[:, 1] + rng.normal(size=100)
    X4 = rng.uniform(size=(80, 1))
    yield X4, rng.standard_cauchy(size=80)
    X5 = rng.uniform(size=(200, 5))
    yield X5, (X5[:, 0] > 0.3).astype(float) + (X5[:, 2] > 0.7) * 2.0


@pytest.mark.parametrize("k", range(5))
def test_training_mse_non_increasing(k):
    X, y = list(fixtures())[k]
    model = gbt_fit(X, y, GbtConfig(n_trees=40))
    assert len(model.train_mse) == 41
    assert np.all(np.diff(model.train_mse) <= 1e-12 * model.train_mse[0])
    assert model.train_mse[-1] == pytest.approx(np.mean((y - model.predict(X)) ** 2))


def test_constant_target_is_exact():
    X = np.random.default_rng(1).uniform(size=(30, 2))
    model = gbt_fit(X, np.full(30, 4.25))
    assert all(t.n_nodes == 1 for t in model.trees)
    np.testing.assert_array_equal(model.predict(X), 4.25)


def test_step_function_stump():
    x = np.linspace(0, 1, 200)[:, None]
    y = (x[:, 0] > 0.5).astype(float)
    model = gbt_fit(x, y, GbtConfig(n_trees=50, max_depth=1))
    assert model.train_mse[-1] < 1e-3
    tree = model.trees[0]
    assert tree.feature[0] == 0 and tree.threshold[0] == x[x[:, 0] <= 0.5].max()


def test_best_split_matches_brute_force():
    rng = np.random.default_rng(2)
    X = rng.integers(0, 6, size=(40, 3)).astype(float)
    r = rng.normal(size=40)
    best = None
    for j in range(3):
        for t in np.unique(X[:, j])[:-1]:
            left = X[:, j] <= t
            sse = np.sum((r[left] - r[left].mean()) ** 2) + np.sum((r[~left] - r[~left].mean()) ** 2)
            if best is None or sse < best[0] - 1e-12:
                best = (sse, j, t)
    gain, j, t = _best_split(X, r, np.arange(40), 1)
    assert (j, t) == best[1:]
    assert gain == pytest.approx(np.sum((r - r.mean()) ** 2) - best[0])


def test_ties_prefer_lowest_feature_then_threshold():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    r = np.array([0.0, 0.0, 1.0, 1.0])
    assert _best_split(X, r, np.arange(4), 1)[1:] == (0, 1.0)
    r = np.array([1.0, 0.0, 0.0, 1.0])  # symmetric: thresholds 0 and 2 gain equally
    assert _best_split(X[:, :1], r, np.arange(4), 1)[1:] == (0, 0.0)


def test_depth_and_min_leaf_respected():
    rng = np.random.default_rng(3)
    X, r = rng.uniform(size=(100, 2)), rng.normal(size=100)
    tree = fit_tree(X, r, max_depth=3, min_leaf=7)
    assert tree.max_depth <= 3
    leaves = tree.predict(X)
    _, counts = np.unique(leaves, return_counts=True)
    assert counts.min() >= 7


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.1, 2, size=(60, 2))
    y = np.sin(3 * X[:, 0]) + X[:, 1] + 0.1 * rng.normal(size=60)
    cfg = GbtConfig(n_trees=15, max_depth=3)
    a = gbt_fit(X, y, cfg).predict(X)
    Xt = np.column_stack([np.exp(X[:, 0]), X[:, 1] ** 3])
    b = gbt_fit(Xt, y, cfg).predict(Xt)
    np.testing.assert_array_equal(a, b)


def test_determinism_and_dump():
    X, y = list(fixtures())[1]
    cfg = GbtConfig(n_trees=5, subsample=0.7, seed=4)
    a, b = gbt_fit(X, y, cfg), gbt_fit(X, y, cfg)
    assert a.dump() == b.dump()
    lines = a.dump().splitlines()
    assert lines[0].startswith("f0=") and lines[1] == "tree 0"
    assert lines[2].strip().startswith("0 x") and "<=" in lines[2]
    assert sum(ln == f"tree {i}" for i in range(5) for ln in lines) == 5


def test_proxy_column_and_errors():
    rng = np.random.default_rng(5)
    X, v = rng.uniform(size=(50, 2)), rng.uniform(size=50)
    model = gbt_fit(X, v * 3, GbtConfig(n_trees=10), proxy=v)
    assert model.n_features == 3 and model.has_proxy
    assert gbt_predict(model, X, v).shape == (50,)
    with pytest.raises(ValueError):
        model.predict(X)
    with pytest.raises(ValueError):
        gbt_fit(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        gbt_fit(np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(ValueError):
        gbt_fit(np.array([[np.nan], [1.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        GbtConfig(shrinkage=0)
