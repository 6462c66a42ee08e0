"""Plain squared-error gradient boosting with exact greedy regression trees.

Split rule is ``x <= threshold`` where the threshold is the largest value on
the left side, so a tree only ever compares a feature with values it saw in
training. That makes predictions on the training rows unchanged by any
strictly increasing transform of a column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Fold


@dataclass(frozen=True)
class GbtConfig:
    n_trees: int = 100
    max_depth: int = 6
    shrinkage: float = 0.3
    min_leaf: int = 1
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("n_trees, max_depth and min_leaf must be positive")
        if not (0 < self.shrinkage <= 1) or not (0 < self.subsample <= 1):
            raise ValueError("shrinkage and subsample must lie in (0, 1]")


@dataclass
class RegressionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        for _ in range(self.max_depth):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            go_left = X[rows, f[internal]] <= self.threshold[node[internal]]
            node[rows] = np.where(go_left, self.left[node[internal]], self.right[node[internal]])
        return self.value[node]


def _best_split(X, r, rows, min_leaf):
    """Exact greedy search. Returns (gain, feature, threshold) or None."""
    n = len(rows)
    if n < 2 * min_leaf:
        return None
    rr = r[rows]
    total = rr.sum()
    base = total * total / n
    best = None
    for j in range(X.shape[1]):
        xs = X[rows, j]
        order = np.argsort(xs, kind="stable")
        xs, rs = xs[order], rr[order]
        csum = np.cumsum(rs)[:-1]
        n_left = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        valid &= (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        gain = csum ** 2 / n_left + (total - csum) ** 2 / (n - n_left) - base
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))  # first maximum gives the lowest threshold
        if best is None or gain[k] > best[0]:
            best = (float(gain[k]), j, float(xs[k]))
    return best


def fit_tree(X, r, max_depth: int, min_leaf: int = 1, rows=None) -> RegressionTree:
    X = np.asarray(X, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    rows = np.arange(len(r)) if rows is None else np.asarray(rows)
    # splits whose gain is rounding noise relative to the residual scale are skipped
    tol = 1e-12 * max(float(np.sum(r[rows] ** 2)), 1e-300)
    feature, threshold, left, right, value, depth = [], [], [], [], [], []

    def grow(idx, d):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(r[idx].mean()))
        depth.append(d)
        if d >= max_depth:
            return node
        split = _best_split(X, r, idx, min_leaf)
        if split is None or split[0] <= tol:
            return node
        _, j, t = split
        mask = X[idx, j] <= t
        feature[node], threshold[node] = j, t
        left[node] = grow(idx[mask], d + 1)
        right[node] = grow(idx[~mask], d + 1)
        return node

    grow(rows, 0)
    return RegressionTree(np.array(feature), np.array(threshold), np.array(left),
                          np.array(right), np.array(value), np.array(depth))


@dataclass
class GbtModel:
    f0: float
    trees: list
    config: GbtConfig
    n_features: int
    train_mse: list = field(default_factory=list)
    has_proxy: bool = False

    def predict(self, X, n_trees: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.full(len(X), self.f0)
        for tree in self.trees[:n_trees]:
            out += self.config.shrinkage * tree.predict(X)
        return out

    def predict_fold(self, fold: Fold) -> np.ndarray:
        return self.predict(_with_proxy(fold.X, fold.extra.get("proxy") if self.has_proxy else None))

    def dump(self) -> str:
        """One line per node: depth, feature, threshold, value."""
        lines = [f"f0={self.f0!r} shrinkage={self.config.shrinkage!r}"]
        for i, tree in enumerate(self.trees):
            lines.append(f"tree {i}")
            for k in range(tree.n_nodes):
                pad = "  " * (int(tree.depth[k]) + 1)
                if tree.feature[k] >= 0:
                    lines.append(f"{pad}{tree.depth[k]} x{tree.feature[k]} <= {tree.threshold[k]!r}")
                else:
                    lines.append(f"{pad}{tree.depth[k]} leaf {tree.value[k]!r}")
        return "\n".join(lines) + "\n"


def _with_proxy(X, proxy):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if proxy is None:
        return X
    return np.column_stack([X, np.asarray(proxy, dtype=np.float64).reshape(-1)])


def gbt_fit(X, y, config: GbtConfig | None = None, proxy=None) -> GbtModel:
    config = config or GbtConfig()
    X = _with_proxy(X, proxy)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(y) == 0:
        raise ValueError("cannot boost on empty data")
    if len(y) < 2:
        raise ValueError("need at least two rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("features and target must be finite")
    rng = np.random.default_rng(config.seed)
    f0 = float(y.mean())
    pred = np.full(len(y), f0)
    model = GbtModel(f0, [], config, X.shape[1], [float(np.mean((y - pred) ** 2))], proxy is not None)
    for _ in range(config.n_trees):
        rows = None
        if config.subsample < 1:
            m = max(2, int(round(config.subsample * len(y))))
            rows = np.sort(rng.choice(len(y), m, replace=False))
        tree = fit_tree(X, y - pred, config.max_depth, config.min_leaf, rows)
        model.trees.append(tree)
        pred += config.shrinkage * tree.predict(X)
        model.train_mse.append(float(np.mean((y - pred) ** 2)))
    return model


def gbt_predict(model: GbtModel, X, proxy=None) -> np.ndarray:
    return model.predict(_with_proxy(X, proxy))
