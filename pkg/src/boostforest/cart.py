"""Plain CART trees (Gini / variance reduction) used as an alternative base learner."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset

MIN_DECREASE = 1e-12


@dataclass(eq=False)
class CartTree:
    """Flat array representation; ``feature == -1`` marks a leaf.

    ``value`` holds the mean label (regression, shape (nodes, 1)) or the
    class frequencies (classification, shape (nodes, J)).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    task: str
    n_features: int
    max_depth: int | None
    min_samples_leaf: int

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def num_leaf(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            i, d = stack.pop()
            best = max(best, d)
            if self.feature[i] >= 0:
                stack.extend(((self.left[i], d + 1), (self.right[i], d + 1)))
        return best

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        """Leaf means (regression) or class-frequency rows (classification)."""
        out = self.value[self.apply(X)]
        return out[:, 0] if self.task == "regression" else out


def predict_cart(tree: CartTree, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = tree.predict(x)
    return out[0] if x.ndim == 1 else out


def _impurity_sums(stats, counts, task):
    """Total impurity (count * node impurity) from cumulative statistics.

    Regression stats are (sum y, sum y^2); classification stats are the
    per-class counts.
    """
    if task == "regression":
        s, s2 = stats[..., 0], stats[..., 1]
        return s2 - s * s / counts
    return counts - (stats * stats).sum(axis=-1) / counts


def _best_split(X, stats_rows, task, features, min_leaf):
    n = X.shape[0]
    total = stats_rows.sum(axis=0)
    parent = _impurity_sums(total, float(n), task)
    best = None
    best_dec = MIN_DECREASE * max(abs(parent), 1.0)
    for d in features:
        order = np.argsort(X[:, d], kind="stable")
        xs = X[order, d]
        # split after position i (left = first i + 1 rows), only between distinct values
        pos = np.flatnonzero(xs[:-1] < xs[1:])
        n_left = pos + 1
        ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not ok.any():
            continue
        pos, n_left = pos[ok], n_left[ok]
        cum = np.cumsum(stats_rows[order], axis=0)[pos]
        imp = (_impurity_sums(cum, n_left.astype(np.float64), task)
               + _impurity_sums(total - cum, (n - n_left).astype(np.float64), task))
        dec = parent - imp
        j = int(np.argmax(dec))
        if dec[j] > best_dec:
            best_dec = float(dec[j])
            best = (int(d), 0.5 * (xs[pos[j]] + xs[pos[j] + 1]))
    return best


def fit_cart(ds: Dataset, max_depth: int | None = None, min_samples_leaf: int = 1,
             feature_subsample: int | str | None = None,
             rng: np.random.Generator | None = None) -> CartTree:
    """Greedy recursive CART.

    ``feature_subsample`` is a feature count, ``"sqrt"`` or ``None`` (all
    features). Thresholds are midpoints between consecutive distinct values.
    """
    if max_depth is not None and max_depth < 0:
        raise ValueError("max_depth must be non-negative")
    if min_samples_leaf < 1:
        raise ValueError("min_samples_leaf must be positive")
    task = ds.task
    X = ds.features
    n, D = X.shape
    if task == "regression":
        y = ds.labels.astype(np.float64)
        stats_rows = np.column_stack([y, y * y])
    else:
        stats_rows = np.zeros((n, ds.n_classes))
        stats_rows[np.arange(n), ds.labels] = 1.0
    if feature_subsample == "sqrt":
        k = math.ceil(math.sqrt(D))
    else:
        k = D if feature_subsample is None else int(feature_subsample)
    if not 1 <= k <= D:
        raise ValueError("feature_subsample must be between 1 and the feature count")
    if k < D and rng is None:
        raise ValueError("feature subsampling needs a random generator")

    feature, threshold, left, right, value, counts = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        s = stats_rows[idx].sum(axis=0)
        value.append(s[:1] / len(idx) if task == "regression" else s / len(idx))
        counts.append(len(idx))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if (max_depth is not None and depth >= max_depth) or len(idx) < 2 * min_samples_leaf:
            continue
        feats = np.arange(D) if k == D else rng.choice(D, size=k, replace=False)
        split = _best_split(X[idx], stats_rows[idx], task, feats, min_samples_leaf)
        if split is None:
            continue
        d, t = split
        go_left = X[idx, d] <= t
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = d, t
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return CartTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.vstack(value),
        n_node_samples=np.asarray(counts, dtype=np.int64),
        task=task,
        n_features=D,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
    )
