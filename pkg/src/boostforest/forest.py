"""Bagged forests of BoostTrees (or CART trees) and model persistence."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .boosttree import BoostTree, ParameterPool, TreeNode, draw, grow
from .cart import CartTree, fit_cart
from .data import Dataset, PreprocessState, bootstrap_indices
from .losses import softmax
from .node_models import ClassModels, ElmModel, LinearModel, sigmoid

BASE_KINDS = ("boosttree-ridge", "boosttree-elm", "boosttree-svr", "cart")
VOTES = ("prob", "hard")
MAGIC = "BOOSTFOREST"
FORMAT_VERSION = 1


class ModelFileError(Exception):
    """Unreadable, corrupted or incompatible model file."""


def node_kind_of(base_kind: str) -> str | None:
    if base_kind not in BASE_KINDS:
        raise ValueError(f"unknown base learner {base_kind!r}")
    return None if base_kind == "cart" else base_kind.split("-", 1)[1]


@dataclass(eq=False)
class Forest:
    learners: list
    task: str
    base_kind: str
    n_features: int
    n_classes: int = 0
    vote: str = "prob"
    master_seed: int = 0
    preprocess: PreprocessState | None = None
    metadata: dict = field(default_factory=dict)  # JSON-safe extras, e.g. column layout

    def __post_init__(self):
        if not self.learners:
            raise ValueError("a forest needs at least one learner")
        if self.vote not in VOTES:
            raise ValueError(f"vote must be one of {VOTES}")

    @property
    def n_estimators(self) -> int:
        return len(self.learners)

    def truncate(self, k: int) -> "Forest":
        """Forest made of the first ``k`` learners."""
        if not 1 <= k <= len(self.learners):
            raise ValueError(f"k must be between 1 and {len(self.learners)}")
        return replace(self, learners=self.learners[:k])

    def learner_outputs(self, X) -> np.ndarray:
        """Per-learner values (K, N) or class probabilities (K, N, J)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got "
                             f"{X.shape[-1] if X.ndim else 0}")
        return np.stack([learner_output(m, X, self.task) for m in self.learners])

    def predict_values(self, X, raw_units: bool = False) -> np.ndarray:
        if self.task != "regression":
            raise ValueError("predict_values is for regression forests")
        out = self.learner_outputs(X).mean(axis=0)
        if raw_units:
            if self.preprocess is None:
                raise ValueError("forest has no label scaling to undo")
            out = self.preprocess.unscale_labels(out)
        return out

    def predict_proba(self, X) -> np.ndarray:
        if self.task == "regression":
            raise ValueError("predict_proba is for classification forests")
        P = self.learner_outputs(X)
        if self.vote == "hard":
            votes = np.argmax(P, axis=2)
            P = np.stack([np.eye(self.n_classes)[v] for v in votes])
        return P.mean(axis=0)

    def predict(self, X) -> np.ndarray:
        """Mean value (regression) or arg-max class index (classification)."""
        if self.task == "regression":
            return self.predict_values(X)
        return np.argmax(self.predict_proba(X), axis=1)


def learner_output(model, X, task) -> np.ndarray:
    """Value (regression) or class-probability rows (classification)."""
    if isinstance(model, CartTree):
        return model.predict(X)
    F = model.predict(X)
    if task == "regression":
        return F
    if task == "binary":
        p = sigmoid(F)
        return np.column_stack([1.0 - p, p])
    return softmax(F)


def predict_forest(forest: Forest, x, raw_units: bool = False):
    """Regression value, or ``(class_index, probabilities)`` for classifiers.

    Accepts one sample (1-D) or a batch (2-D).
    """
    x = np.asarray(x, dtype=np.float64)
    X = x[None, :] if x.ndim == 1 else x
    if forest.task == "regression":
        out = forest.predict_values(X, raw_units=raw_units)
        return out[0] if x.ndim == 1 else out
    P = forest.predict_proba(X)
    labels = np.argmax(P, axis=1)
    return (int(labels[0]), P[0]) if x.ndim == 1 else (labels, P)


def child_seeds(master_seed: int, n: int) -> list[np.random.SeedSequence]:
    """Seed i depends only on (master_seed, i), so forests nest by prefix."""
    return np.random.SeedSequence(master_seed).spawn(n)


def _fit_learner(ds: Dataset, seed: np.random.SeedSequence, base_kind: str,
                 pool: ParameterPool, max_num_leaf, bootstrap: bool,
                 filter_low_weight: bool, resample_lambda: bool, cart_features):
    rng = np.random.default_rng(seed)
    if bootstrap:
        ds = ds.subset(bootstrap_indices(ds.n_samples, rng))
    if base_kind == "cart":
        depth = int(draw(pool.cart_max_depth, rng))
        leaf = int(draw(pool.cart_min_samples_leaf, rng))
        return fit_cart(ds, depth, leaf, cart_features, rng)
    if max_num_leaf is None and pool.max_num_leaf is not None:
        max_num_leaf = int(draw(pool.max_num_leaf, rng))
    return grow(ds, pool, rng, node_kind_of(base_kind), max_num_leaf,
                filter_low_weight=filter_low_weight, resample_lambda=resample_lambda)


def train_forest(ds: Dataset, n_estimators: int = 100, pool: ParameterPool | None = None,
                 base_kind: str = "boosttree-ridge", max_num_leaf: int | None = None,
                 master_seed: int = 0, n_jobs: int = 1, vote: str = "prob",
                 bootstrap: bool = True, filter_low_weight: bool = True,
                 resample_lambda: bool = True, cart_features=None,
                 preprocess: PreprocessState | None = None) -> Forest:
    """Train ``n_estimators`` learners on bootstrap replicas of a model-space dataset.

    Each learner draws its bootstrap sample, its per-tree parameters and all
    node-level randomness from its own child seed, so the forest does not
    depend on ``n_jobs`` or on scheduling order. A fixed ``max_num_leaf``
    overrides the pool's per-tree draw.
    """
    if not isinstance(n_estimators, (int, np.integer)) or n_estimators < 1:
        raise ValueError("n_estimators must be a positive integer")
    kind = node_kind_of(base_kind)
    if pool is None:
        pool = ParameterPool.defaults(kind or "ridge")
    if kind is not None:
        pool.check_kind(kind)
        if kind != "ridge" and ds.task != "regression":
            raise ValueError(f"{base_kind} supports regression only")
    if vote not in VOTES:
        raise ValueError(f"vote must be one of {VOTES}")
    seeds = child_seeds(master_seed, n_estimators)
    args = (base_kind, pool, max_num_leaf, bootstrap, filter_low_weight,
            resample_lambda, cart_features)
    if n_jobs == 1:
        learners = [_fit_learner(ds, s, *args) for s in seeds]
    else:
        learners = Parallel(n_jobs=n_jobs)(delayed(_fit_learner)(ds, s, *args) for s in seeds)
    return Forest(
        learners=list(learners),
        task=ds.task,
        base_kind=base_kind,
        n_features=ds.features.shape[1],
        n_classes=ds.n_classes,
        vote=vote,
        master_seed=int(master_seed),
        preprocess=preprocess,
    )


# Serialization

def _model_to_dict(m) -> dict:
    if isinstance(m, LinearModel):
        return {"kind": "linear", "w": m.w.tolist(), "b": float(m.b)}
    if isinstance(m, ElmModel):
        return {"kind": "elm", "hidden_weights": m.hidden_weights.tolist(),
                "hidden_bias": m.hidden_bias.tolist(), "output": _model_to_dict(m.output)}
    if isinstance(m, ClassModels):
        return {"kind": "classes", "models": [_model_to_dict(c) for c in m.models]}
    raise TypeError(f"cannot serialize node model {type(m).__name__}")


def _model_from_dict(d: dict):
    kind = d["kind"]
    if kind == "linear":
        return LinearModel(np.asarray(d["w"], dtype=np.float64), float(d["b"]))
    if kind == "elm":
        W = np.asarray(d["hidden_weights"], dtype=np.float64)
        return ElmModel(W.reshape(len(d["hidden_bias"]), -1),
                        np.asarray(d["hidden_bias"], dtype=np.float64),
                        _model_from_dict(d["output"]))
    if kind == "classes":
        return ClassModels(tuple(_model_from_dict(c) for c in d["models"]))
    raise ValueError(f"unknown node model kind {kind!r}")


def _tree_to_dict(tree: BoostTree) -> dict:
    nodes, order = [], [tree.root]
    index = {id(tree.root): 0}
    for node in order:  # breadth-first; the list grows while iterating
        rec = {"model": _model_to_dict(node.model), "n": node.n_samples}
        if not node.is_leaf:
            for child in (node.left, node.right):
                index[id(child)] = len(order)
                order.append(child)
            rec.update(feature=node.feature, threshold=node.threshold,
                       left=index[id(node.left)], right=index[id(node.right)])
        nodes.append(rec)
    return {"type": "boosttree", "task": tree.task, "n_features": tree.n_features,
            "n_classes": tree.n_classes, "node_kind": tree.node_kind,
            "max_num_leaf": tree.max_num_leaf, "nodes": nodes}


def _tree_from_dict(d: dict) -> BoostTree:
    recs = d["nodes"]
    nodes = [TreeNode(model=_model_from_dict(r["model"]), n_samples=int(r["n"])) for r in recs]
    for node, r in zip(nodes, recs):
        if "feature" in r:
            node.feature, node.threshold = int(r["feature"]), float(r["threshold"])
            if not math.isfinite(node.threshold):
                raise ValueError("split thresholds must be finite")
            node.left, node.right = nodes[r["left"]], nodes[r["right"]]
    return BoostTree(nodes[0], d["task"], int(d["n_features"]), int(d["n_classes"]),
                     d["node_kind"], d["max_num_leaf"])


def _cart_to_dict(t: CartTree) -> dict:
    return {"type": "cart", "task": t.task, "n_features": t.n_features,
            "max_depth": t.max_depth, "min_samples_leaf": t.min_samples_leaf,
            "feature": t.feature.tolist(),
            "threshold": [None if math.isnan(v) else v for v in t.threshold.tolist()],
            "left": t.left.tolist(), "right": t.right.tolist(),
            "value": t.value.tolist(), "n": t.n_node_samples.tolist()}


def _cart_from_dict(d: dict) -> CartTree:
    thr = [math.nan if v is None else v for v in d["threshold"]]
    return CartTree(
        feature=np.asarray(d["feature"], dtype=np.int64),
        threshold=np.asarray(thr, dtype=np.float64),
        left=np.asarray(d["left"], dtype=np.int64),
        right=np.asarray(d["right"], dtype=np.int64),
        value=np.asarray(d["value"], dtype=np.float64),
        n_node_samples=np.asarray(d["n"], dtype=np.int64),
        task=d["task"], n_features=int(d["n_features"]),
        max_depth=d["max_depth"], min_samples_leaf=int(d["min_samples_leaf"]),
    )


def forest_to_dict(forest: Forest) -> dict:
    learners = [_cart_to_dict(m) if isinstance(m, CartTree) else _tree_to_dict(m)
                for m in forest.learners]
    return {
        "task": forest.task, "base_kind": forest.base_kind,
        "n_features": forest.n_features, "n_classes": forest.n_classes,
        "vote": forest.vote, "master_seed": forest.master_seed,
        "preprocess": None if forest.preprocess is None else forest.preprocess.to_dict(),
        "learners": learners,
        "metadata": forest.metadata,
    }


def forest_from_dict(d: dict) -> Forest:
    learners = [_cart_from_dict(m) if m["type"] == "cart" else _tree_from_dict(m)
                for m in d["learners"]]
    pre = d["preprocess"]
    return Forest(
        learners=learners, task=d["task"], base_kind=d["base_kind"],
        n_features=int(d["n_features"]), n_classes=int(d["n_classes"]),
        vote=d["vote"], master_seed=int(d["master_seed"]),
        preprocess=None if pre is None else PreprocessState.from_dict(pre),
        metadata=d.get("metadata", {}),
    )


def dumps_model(forest: Forest) -> str:
    """Text model file.

    Floats are written with Python's shortest round-trip repr, which always
    reproduces the exact double on reading.
    """
    payload = json.dumps(forest_to_dict(forest), sort_keys=True, separators=(",", ":"),
                         allow_nan=False)
    data = payload.encode("utf-8")
    return (f"{MAGIC}\nformat_version {FORMAT_VERSION}\nlength {len(data)}\n"
            f"crc32 {zlib.crc32(data):08x}\n{payload}\n")


def loads_model(text: str) -> Forest:
    lines = text.split("\n", 4)
    if not lines or lines[0].strip() != MAGIC:
        raise ModelFileError("unrecognized model file")
    if len(lines) < 5:
        raise ModelFileError("truncated model file")
    try:
        header = dict(line.split(" ", 1) for line in lines[1:4])
        version = int(header["format_version"])
        length = int(header["length"])
        crc = int(header["crc32"], 16)
    except (KeyError, ValueError):
        raise ModelFileError("malformed model file header") from None
    if version != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model format version {version}")
    data = lines[4].rstrip("\n").encode("utf-8")
    if len(data) < length:
        raise ModelFileError("truncated model file")
    if len(data) != length or zlib.crc32(data) != crc:
        raise ModelFileError("model file checksum failure")
    try:
        return forest_from_dict(json.loads(data))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"invalid model payload: {exc}") from None


def save_model(forest: Forest, path) -> None:
    Path(path).write_text(dumps_model(forest), encoding="utf-8")


def load_model(path) -> Forest:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ModelFileError(f"cannot read model file: {exc}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ModelFileError("model file checksum failure") from None
    return loads_model(text)
