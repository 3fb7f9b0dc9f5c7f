"""BoostTree: a decision tree whose nodes carry boosted regression models.

A sample is routed to a leaf and the prediction is the sum of the node
models along the root-to-leaf path. Leaves are split greedily, highest
impurity first, using the second-order bias-only gain to choose the split
and the penalized gain to accept it.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .losses import (
    center_multiclass,
    grad_hess,
    leaf_impurity,
    one_hot,
    working_set_binary,
    working_set_multiclass,
)
from .node_models import (
    ClassModels,
    LinearModel,
    SvrParams,
    fit_elm,
    fit_ridge,
    fit_linear_svr,
    fit_weighted_ridge,
)

NODE_KINDS = ("ridge", "elm", "svr")
PARENT_DAMPING = 0.0001
N_THRESHOLDS = 100

DEFAULT_MIN_SAMPLES_LEAF = tuple(range(5, 16))
DEFAULT_LAMBDA = (0.0001, 0.001, 0.01, 0.1)
DEFAULT_ELM_LAMBDA = (0.001, 0.01, 0.1)
DEFAULT_ELM_HIDDEN = (10, 20, 30, 40)
DEFAULT_SVR_C = (0.1, 1.0, 2.0, 5.0, 10.0)
DEFAULT_SVR_EPSILON = (0.1, 0.2, 0.4, 0.8)
DEFAULT_MAX_NUM_LEAF = (5, 10, 15, 20)
DEFAULT_CART_MAX_DEPTH = (4, 6, 8)
DEFAULT_CART_MIN_SAMPLES_LEAF = (5, 10, 15)


@dataclass(frozen=True)
class ParameterPool:
    """Candidate values sampled per node (or per tree for ``max_num_leaf``)."""

    min_samples_leaf: tuple[int, ...] = DEFAULT_MIN_SAMPLES_LEAF
    lam: tuple[float, ...] = DEFAULT_LAMBDA
    elm_hidden: tuple[int, ...] | None = None
    svr_C: tuple[float, ...] | None = None
    svr_epsilon: tuple[float, ...] | None = None
    max_num_leaf: tuple[int, ...] | None = None
    cart_max_depth: tuple[int, ...] = DEFAULT_CART_MAX_DEPTH
    cart_min_samples_leaf: tuple[int, ...] = DEFAULT_CART_MIN_SAMPLES_LEAF

    def __post_init__(self):
        for name in ("min_samples_leaf", "lam", "cart_max_depth", "cart_min_samples_leaf"):
            if not getattr(self, name):
                raise ValueError(f"parameter pool {name!r} is empty")
        for name in ("elm_hidden", "svr_C", "svr_epsilon", "max_num_leaf"):
            value = getattr(self, name)
            if value is not None and not value:
                raise ValueError(f"parameter pool {name!r} is empty")
        if min(self.min_samples_leaf) < 1:
            raise ValueError("min_samples_leaf values must be positive")
        if min(self.lam) < 0:
            raise ValueError("lambda values must be non-negative")
        if self.svr_C is not None and min(self.svr_C) <= 0:
            raise ValueError("SVR C values must be positive")
        if self.elm_hidden is not None and min(self.elm_hidden) < 1:
            raise ValueError("ELM hidden-node counts must be positive")

    @classmethod
    def defaults(cls, node_kind: str = "ridge") -> "ParameterPool":
        """Default candidate pools for each node kind."""
        if node_kind == "ridge":
            return cls()
        if node_kind == "elm":
            return cls(lam=DEFAULT_ELM_LAMBDA, elm_hidden=DEFAULT_ELM_HIDDEN,
                       max_num_leaf=DEFAULT_MAX_NUM_LEAF)
        if node_kind == "svr":
            return cls(svr_C=DEFAULT_SVR_C, svr_epsilon=DEFAULT_SVR_EPSILON,
                       max_num_leaf=DEFAULT_MAX_NUM_LEAF)
        raise ValueError(f"unknown node kind {node_kind!r}")

    def check_kind(self, node_kind: str):
        if node_kind == "elm" and self.elm_hidden is None:
            raise ValueError("ELM nodes need an elm_hidden pool")
        if node_kind == "svr" and (self.svr_C is None or self.svr_epsilon is None):
            raise ValueError("SVR nodes need svr_C and svr_epsilon pools")
        if node_kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {node_kind!r}")


def draw(pool, rng: np.random.Generator, size=None):
    values = np.asarray(pool)
    return values[rng.integers(len(values), size=size)]


@dataclass(eq=False)
class TreeNode:
    model: object
    feature: int = -1
    threshold: float = math.nan
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    n_samples: int = 0
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(eq=False)
class BoostTree:
    root: TreeNode
    task: str
    n_features: int
    n_classes: int = 0
    node_kind: str = "ridge"
    max_num_leaf: int | None = None

    def leaves(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    @property
    def num_leaf(self) -> int:
        return len(self.leaves())

    def predict(self, X) -> np.ndarray:
        """Path-sum outputs: values, binary logits, or an (N, J) logit matrix."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        n = X.shape[0]
        out = np.zeros((n, self.n_classes)) if self.task == "multiclass" else np.zeros(n)
        stack = [(self.root, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            out[idx] += node.model.predict(X[idx])
            if not node.is_leaf:
                go_left = X[idx, node.feature] <= node.threshold
                stack.append((node.right, idx[~go_left]))
                stack.append((node.left, idx[go_left]))
        return out

    def strip(self) -> "BoostTree":
        """Drop cached training indices."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            node.samples = None
            if not node.is_leaf:
                stack.extend((node.left, node.right))
        return self


def predict_tree(tree: BoostTree, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = tree.predict(x)
    return out[0] if x.ndim == 1 else out


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    gain: float
    param_left: float  # lambda, or C for SVR nodes
    param_right: float
    n_left: int
    n_right: int


def split_gain_bias(gL, hL, gR, hR, lambda_left, lambda_right):
    """Second-order gain when each child only adds a constant.

    The parent term uses a fixed 0.0001 damping instead of a lambda.
    """
    gL, hL, gR, hR = (np.asarray(a, dtype=np.float64) for a in (gL, hL, gR, hR))
    return 0.5 * (
        gL**2 / (hL + lambda_left)
        + gR**2 / (hR + lambda_right)
        - (gL + gR) ** 2 / (hL + hR + PARENT_DAMPING)
    )


def split_gain_full(bias_gain, left, right, lambda_left, lambda_right) -> float:
    """Bias gain minus the coefficient penalties of the fitted children.

    For SVR children pass ``lambda = 1 / (2 C)``. Multiclass children
    contribute the sum of their per-class squared norms.
    """
    return float(bias_gain - lambda_left * left.coef_sq_norm()
                 - lambda_right * right.coef_sq_norm())


def enumerate_thresholds(values, n_max: int = N_THRESHOLDS) -> np.ndarray:
    """Distinct values when there are at most ``n_max``; otherwise ``n_max``
    evenly spaced values from min to max inclusive."""
    distinct = np.unique(np.asarray(values, dtype=np.float64))
    if distinct.size == 0:
        raise ValueError("no values to split on")
    if distinct.size <= n_max:
        return distinct
    return np.linspace(distinct[0], distinct[-1], n_max)


def _penalty_weight(param, node_kind):
    return 1.0 / (2.0 * param) if node_kind == "svr" else param


def find_best_split(X, gh, pool: ParameterPool, rng: np.random.Generator,
                    node_kind: str = "ridge", resample_lambda: bool = True):
    """Best (feature, threshold) on a random sqrt(D) feature subset.

    ``X`` holds the rows of the node being split and ``gh`` their gradients.
    Regularization values for the two children are drawn for every feasible
    threshold unless ``resample_lambda`` is off, in which case one pair is
    drawn per node. Returns ``None`` when no candidate has positive gain.
    """
    X = np.asarray(X, dtype=np.float64)
    n, D = X.shape
    if n < 2:
        return None
    g, h = gh.g, gh.h
    multi = g.ndim == 2
    min_left, min_right = (int(v) for v in draw(pool.min_samples_leaf, rng, 2))
    if min_left + min_right > n:
        return None
    reg_pool = pool.svr_C if node_kind == "svr" else pool.lam
    fixed = None if resample_lambda else draw(reg_pool, rng, 2)
    k = math.ceil(math.sqrt(D))
    features = rng.choice(D, size=k, replace=False)

    G = g.sum(axis=0)
    H = h.sum(axis=0)
    best = None
    best_gain = 0.0
    for d in features:
        order = np.argsort(X[:, d], kind="stable")
        xs = X[order, d]
        thresholds = enumerate_thresholds(xs)
        n_left = np.searchsorted(xs, thresholds, side="right")
        ok = (n_left >= min_left) & (n - n_left >= min_right)
        if not ok.any():
            continue
        thresholds, n_left = thresholds[ok], n_left[ok]
        m = len(thresholds)
        if fixed is None:
            params = draw(reg_pool, rng, (m, 2))
        else:
            params = np.broadcast_to(fixed, (m, 2))
        lam = _penalty_weight(params.astype(np.float64), node_kind)
        cg = np.cumsum(g[order], axis=0)
        ch = np.cumsum(h[order], axis=0)
        gL, hL = cg[n_left - 1], ch[n_left - 1]
        gR, hR = G - gL, H - hL
        lam_l, lam_r = lam[:, 0], lam[:, 1]
        if multi:
            lam_l, lam_r = lam_l[:, None], lam_r[:, None]
        gains = split_gain_bias(gL, hL, gR, hR, lam_l, lam_r)
        if multi:
            gains = gains.sum(axis=1)
        j = int(np.argmax(gains))
        if gains[j] > best_gain:
            best_gain = float(gains[j])
            best = SplitCandidate(
                feature=int(d),
                threshold=float(thresholds[j]),
                gain=best_gain,
                param_left=float(params[j, 0]),
                param_right=float(params[j, 1]),
                n_left=int(n_left[j]),
                n_right=int(n - n_left[j]),
            )
    return best


def fit_node_model(task, X, y, F, node_kind: str = "ridge", lam: float = 0.01,
                   n_hidden: int | None = None, svr: SvrParams | None = None,
                   rng: np.random.Generator | None = None,
                   filter_low_weight: bool = True):
    """Fit one node's model to the error left by its parent's path sum ``F``.

    Regression nodes fit the residual ``y - F``; classification nodes take
    one Newton step by weighted ridge on the clipped working response. If
    the low-weight filter empties a working set the unfiltered set is used.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 1:
        raise ValueError("cannot fit a model on an empty node")
    if task == "regression":
        resid = np.asarray(y, dtype=np.float64) - F
        if node_kind == "ridge":
            return fit_ridge(X, resid, lam)
        if node_kind == "elm":
            return fit_elm(X, resid, lam, n_hidden, rng)
        if node_kind == "svr":
            return fit_linear_svr(X, resid, svr)
        raise ValueError(f"unknown node kind {node_kind!r}")
    if node_kind != "ridge":
        raise ValueError("classification trees support ridge nodes only")
    if task == "binary":
        ws = working_set_binary(y, F, filter_low_weight)
        if ws.indices.size == 0:
            ws = working_set_binary(y, F, False)
        return fit_weighted_ridge(X[ws.indices], ws.z, ws.weights, lam)
    Y = one_hot(y, F.shape[1]) if np.ndim(y) == 1 else y
    sets = working_set_multiclass(Y, F, filter_low_weight)
    models = []
    for j, ws in enumerate(sets):
        if ws.indices.size == 0:
            ws = working_set_multiclass(Y, F, False)[j]
        models.append(fit_weighted_ridge(X[ws.indices], ws.z, ws.weights, lam))
    return ClassModels(tuple(center_multiclass(models)))


def _zero_model(task, n_features, n_classes):
    if task == "multiclass":
        return ClassModels.zero(n_features, n_classes)
    return LinearModel.zero(n_features)


def grow(ds: Dataset, pool: ParameterPool, rng: np.random.Generator,
         node_kind: str = "ridge", max_num_leaf: int | None = None,
         filter_low_weight: bool = True, resample_lambda: bool = True,
         keep_samples: bool = False) -> BoostTree:
    """Grow a BoostTree on a model-space dataset.

    The leaf with the highest impurity (earliest-created on ties) is split
    next. A leaf whose best split is missing or has non-positive penalized
    gain is frozen. Growth stops when no leaf can be split or the tree has
    ``max_num_leaf`` leaves.
    """
    pool.check_kind(node_kind)
    if max_num_leaf is not None and max_num_leaf < 1:
        raise ValueError("max_num_leaf must be positive")
    task = ds.task
    X = ds.features
    N, D = X.shape
    J = ds.n_classes if task == "multiclass" else 0
    y = one_hot(ds.labels, J) if task == "multiclass" else ds.labels
    F = np.zeros((N, J)) if task == "multiclass" else np.zeros(N)

    root = TreeNode(model=_zero_model(task, D, J), n_samples=N, samples=np.arange(N))
    tree = BoostTree(root, task, D, J, node_kind, max_num_leaf)
    counter = 0
    heap = [(-leaf_impurity(task, y, F, N), counter, root)]
    num_leaf = 1

    while heap and (max_num_leaf is None or num_leaf < max_num_leaf):
        _, _, node = heapq.heappop(heap)
        idx = node.samples
        Xn, yn, Fn = X[idx], y[idx], F[idx]
        cand = find_best_split(Xn, grad_hess(task, yn, Fn), pool, rng, node_kind,
                               resample_lambda)
        if cand is None:
            continue
        go_left = Xn[:, cand.feature] <= cand.threshold
        sides = (idx[go_left], idx[~go_left])
        extra = [{}, {}]
        if node_kind == "elm":
            for e, m in zip(extra, draw(pool.elm_hidden, rng, 2)):
                e["n_hidden"] = int(m)
        elif node_kind == "svr":
            for e, c, eps in zip(extra, (cand.param_left, cand.param_right),
                                 draw(pool.svr_epsilon, rng, 2)):
                e["svr"] = SvrParams(c, float(eps))
        models = []
        for side, param, e in zip(sides, (cand.param_left, cand.param_right), extra):
            models.append(fit_node_model(task, X[side], y[side], F[side], node_kind,
                                         lam=param, rng=rng,
                                         filter_low_weight=filter_low_weight, **e))
        gain = split_gain_full(cand.gain, models[0], models[1],
                               _penalty_weight(cand.param_left, node_kind),
                               _penalty_weight(cand.param_right, node_kind))
        if not gain > 0:
            continue

        node.feature, node.threshold = cand.feature, cand.threshold
        children = []
        for side, model in zip(sides, models):
            F[side] += model.predict(X[side])
            child = TreeNode(model=model, n_samples=len(side), samples=side)
            children.append(child)
            counter += 1
            heapq.heappush(heap, (-leaf_impurity(task, y[side], F[side]), counter, child))
        node.left, node.right = children
        if not keep_samples:
            node.samples = None
        num_leaf += 1

    if not keep_samples:
        tree.strip()
    tree.train_outputs = F
    return tree
