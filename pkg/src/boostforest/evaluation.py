"""Repeated k-fold cross-validation, metrics, ranking and CSV reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .boosttree import ParameterPool
from .cart import fit_cart
from .data import Dataset, apply_preprocess, fit_preprocess
from .forest import Forest, node_kind_of, train_forest

FOLD_HEADER = ("dataset", "algorithm", "repeat", "fold", "metric", "value")
AGGREGATE_HEADER = ("dataset", "algorithm", "mean", "std", "rank")
CURVE_HEADER = ("value", "mean", "std")
KNOBS = ("n_estimators", "max_num_leaf")


@dataclass(frozen=True)
class CvPlan:
    """Fold id of every sample, one row per repeat."""

    n_repeats: int
    n_folds: int
    seed: int
    assignments: np.ndarray  # (n_repeats, n)

    @property
    def n_samples(self) -> int:
        return self.assignments.shape[1]

    def splits(self):
        """Yield ``(repeat, fold, train_idx, test_idx)``."""
        for r, assign in enumerate(self.assignments):
            for f in range(self.n_folds):
                yield r, f, np.flatnonzero(assign != f), np.flatnonzero(assign == f)


def make_cv_plan(n: int, n_repeats: int = 5, n_folds: int = 2, seed: int = 0,
                 stratify=None) -> CvPlan:
    """Shuffled fold assignment per repeat.

    With ``stratify`` labels, samples are grouped by class (in class order,
    shuffled within each class) and dealt round-robin, so every class and
    every fold differs by at most one sample across folds.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be at least 2")
    if n_repeats < 1:
        raise ValueError("n_repeats must be at least 1")
    if n < n_folds:
        raise ValueError(f"cannot split {n} samples into {n_folds} folds")
    rng = np.random.default_rng(seed)
    if stratify is not None:
        labels = np.asarray(stratify)
        if labels.shape != (n,):
            raise ValueError("stratify labels must have one entry per sample")
    out = np.empty((n_repeats, n), dtype=np.int64)
    for r in range(n_repeats):
        if stratify is None:
            order = rng.permutation(n)
        else:
            order = np.concatenate([rng.permutation(np.flatnonzero(labels == c))
                                    for c in np.unique(labels)])
        out[r, order] = np.arange(n) % n_folds
    return CvPlan(n_repeats, n_folds, seed, out)


def _check_lengths(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty inputs")
    return pred, truth


def accuracy(pred, truth) -> float:
    pred, truth = _check_lengths(pred, truth)
    return float(np.mean(pred == truth))


def rmse(pred, truth) -> float:
    pred, truth = _check_lengths(pred, truth)
    r = pred.astype(np.float64) - truth.astype(np.float64)
    return float(np.sqrt(np.mean(r * r)))


def rank_algorithms(scores: dict, higher_is_better: bool = True) -> dict:
    """Rank 1 is best; tied scores share the mean of their positions."""
    if len(scores) < 2:
        raise ValueError("ranking needs at least two algorithms")
    names = list(scores)
    vals = np.array([scores[k] for k in names], dtype=np.float64)
    key = -vals if higher_is_better else vals
    ranks = {}
    for name, v in zip(names, key):
        better = np.sum(key < v)
        tied = np.sum(key == v)
        ranks[name] = float(better + (tied + 1) / 2.0)
    return ranks


# Algorithm configurations: each has ``name``, ``supports(task)`` and
# ``fit(ds, seed)`` returning an object with ``predict(X)``.

@dataclass(frozen=True)
class ForestConfig:
    name: str = "BoostForest"
    base_kind: str = "boosttree-ridge"
    n_estimators: int = 100
    pool: ParameterPool | None = None
    max_num_leaf: int | None = None
    vote: str = "prob"
    filter_low_weight: bool = True
    resample_lambda: bool = True
    cart_features: object = None
    n_jobs: int = 1

    def __post_init__(self):
        node_kind_of(self.base_kind)

    def supports(self, task) -> bool:
        return self.base_kind in ("boosttree-ridge", "cart") or task == "regression"

    def fit(self, ds: Dataset, seed: int, **overrides) -> Forest:
        kw = dict(n_estimators=self.n_estimators, pool=self.pool,
                  base_kind=self.base_kind, max_num_leaf=self.max_num_leaf,
                  master_seed=seed, n_jobs=self.n_jobs, vote=self.vote,
                  filter_low_weight=self.filter_low_weight,
                  resample_lambda=self.resample_lambda, cart_features=self.cart_features)
        kw.update(overrides)
        return train_forest(ds, **kw)


@dataclass(frozen=True)
class CartConfig:
    """A single CART tree with fixed parameters."""

    name: str = "CART"
    max_depth: int | None = 6
    min_samples_leaf: int = 10

    def supports(self, task) -> bool:
        return True

    def fit(self, ds: Dataset, seed: int):
        tree = fit_cart(ds, self.max_depth, self.min_samples_leaf)
        return _CartPredictor(tree)


@dataclass(frozen=True)
class _CartPredictor:
    tree: object

    def predict(self, X):
        out = self.tree.predict(X)
        return out if self.tree.task == "regression" else np.argmax(out, axis=1)


@dataclass(frozen=True)
class ConstantConfig:
    """Training mean (regression) or majority class; a sanity baseline."""

    name: str = "Constant"

    def supports(self, task) -> bool:
        return True

    def fit(self, ds: Dataset, seed: int):
        if ds.task == "regression":
            value = float(np.mean(ds.labels))
        else:
            value = int(np.argmax(np.bincount(ds.labels, minlength=ds.n_classes)))
        return _ConstantPredictor(value)


@dataclass(frozen=True)
class _ConstantPredictor:
    value: float

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], self.value)


def metric_name(task) -> str:
    return "rmse" if task == "regression" else "accuracy"


def score(task, pred, truth) -> float:
    return rmse(pred, truth) if task == "regression" else accuracy(pred, truth)


def fold_seed(seed: int, repeat: int, fold: int) -> int:
    """Training seed for one fold; shared by all algorithms."""
    return int(np.random.SeedSequence([seed, repeat, fold]).generate_state(1)[0])


def split_fold(ds: Dataset, train_idx, test_idx):
    """Preprocessing is fitted on the training rows only."""
    train = ds.subset(train_idx)
    state = fit_preprocess(train)
    return apply_preprocess(state, train), apply_preprocess(state, ds.subset(test_idx)), state


@dataclass
class ResultTable:
    """Fold-level scores keyed by (dataset, algorithm, repeat, fold)."""

    rows: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)  # dataset -> metric name

    def add(self, dataset, algorithm, repeat, fold, metric, value):
        self.rows[(dataset, algorithm, int(repeat), int(fold))] = float(value)
        self.metrics[dataset] = metric

    def values(self, dataset, algorithm) -> np.ndarray:
        keys = sorted(k for k in self.rows if k[0] == dataset and k[1] == algorithm)
        return np.array([self.rows[k] for k in keys])

    def datasets(self) -> list:
        return list(dict.fromkeys(k[0] for k in self.rows))

    def algorithms(self, dataset) -> list:
        return list(dict.fromkeys(k[1] for k in self.rows if k[0] == dataset))

    def mean(self, dataset, algorithm) -> float:
        return float(np.mean(self.values(dataset, algorithm)))

    def aggregate(self) -> list[tuple]:
        """``(dataset, algorithm, mean, std, rank)``; std uses ddof=1."""
        out = []
        for d in self.datasets():
            algs = self.algorithms(d)
            means = {a: self.mean(d, a) for a in algs}
            if len(algs) > 1:
                ranks = rank_algorithms(means, self.metrics[d] != "rmse")
            else:
                ranks = {algs[0]: 1.0}
            for a in algs:
                v = self.values(d, a)
                std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
                out.append((d, a, means[a], std, ranks[a]))
        return out

    def fold_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FOLD_HEADER)
        for (d, a, r, f), v in self.rows.items():
            w.writerow((d, a, r, f, self.metrics[d], repr(v)))
        return buf.getvalue()

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for d, a, m, s, rk in self.aggregate():
            w.writerow((d, a, repr(m), repr(s), repr(rk)))
        return buf.getvalue()


def _default_stratify(ds: Dataset, stratify):
    if stratify is None:
        stratify = ds.task != "regression"
    return ds.labels if stratify else None


def _run_fold(ds, alg, seed, r, f, train_idx, test_idx):
    train, test, _ = split_fold(ds, train_idx, test_idx)
    model = alg.fit(train, fold_seed(seed, r, f))
    return score(ds.task, model.predict(test.features), test.labels)


def run_benchmark(datasets: dict, algorithms, n_repeats: int = 5, n_folds: int = 2,
                  seed: int = 0, stratify: bool | None = None,
                  n_jobs: int = 1) -> ResultTable:
    """Score every algorithm on every dataset with repeated k-fold CV.

    ``datasets`` maps names to raw (unscaled) datasets. Regression scores
    are RMSE in z-normalized label units, classification scores accuracy.
    All algorithms see the same folds and fold seeds.
    """
    names = [a.name for a in algorithms]
    if len(set(names)) != len(names):
        raise ValueError("algorithm names must be unique")
    table = ResultTable()
    for dname, ds in datasets.items():
        for alg in algorithms:
            if not alg.supports(ds.task):
                raise ValueError(f"{alg.name} does not support the {ds.task} task")
        plan = make_cv_plan(ds.n_samples, n_repeats, n_folds, seed,
                            _default_stratify(ds, stratify))
        jobs = [(alg, r, f, tr, te) for alg in algorithms for r, f, tr, te in plan.splits()]
        if n_jobs == 1:
            scores = [_run_fold(ds, alg, seed, r, f, tr, te) for alg, r, f, tr, te in jobs]
        else:
            scores = Parallel(n_jobs=n_jobs)(
                delayed(_run_fold)(ds, alg, seed, r, f, tr, te) for alg, r, f, tr, te in jobs)
        for (alg, r, f, _, _), s in zip(jobs, scores):
            table.add(dname, alg.name, r, f, metric_name(ds.task), s)
    return table


def _sweep_fold(ds, alg, knob, values, seed, r, f, train_idx, test_idx):
    train, test, _ = split_fold(ds, train_idx, test_idx)
    fs = fold_seed(seed, r, f)
    out = []
    if knob == "n_estimators":
        # learner i depends only on (seed, i): a K-forest is a prefix of the largest one
        big = alg.fit(train, fs, n_estimators=max(values))
        for v in values:
            out.append(score(ds.task, big.truncate(v).predict(test.features), test.labels))
    else:
        for v in values:
            model = alg.fit(train, fs, max_num_leaf=v)
            out.append(score(ds.task, model.predict(test.features), test.labels))
    return out


def sweep_curve(ds: Dataset, algorithm: ForestConfig, knob: str, values,
                n_repeats: int = 5, n_folds: int = 2, seed: int = 0,
                stratify: bool | None = None, n_jobs: int = 1) -> list[tuple]:
    """``(value, mean, std)`` per knob value over identical folds."""
    if knob not in KNOBS:
        raise ValueError(f"knob must be one of {KNOBS}")
    values = [int(v) for v in values]
    if not values:
        raise ValueError("values must be nonempty")
    if any(b <= a for a, b in zip(values, values[1:])) or values[0] < 1:
        raise ValueError("values must be positive and increasing")
    if not isinstance(algorithm, ForestConfig):
        raise ValueError("sweeps need a forest configuration")
    if not algorithm.supports(ds.task):
        raise ValueError(f"{algorithm.name} does not support the {ds.task} task")
    plan = make_cv_plan(ds.n_samples, n_repeats, n_folds, seed, _default_stratify(ds, stratify))
    args = [(ds, algorithm, knob, values, seed, r, f, tr, te) for r, f, tr, te in plan.splits()]
    if n_jobs == 1:
        per_fold = [_sweep_fold(*a) for a in args]
    else:
        per_fold = Parallel(n_jobs=n_jobs)(delayed(_sweep_fold)(*a) for a in args)
    S = np.array(per_fold)  # (folds, values)
    std = np.std(S, axis=0, ddof=1) if S.shape[0] > 1 else np.zeros(len(values))
    return [(v, float(m), float(s)) for v, m, s in zip(values, S.mean(axis=0), std)]


def curve_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for v, m, s in rows:
        w.writerow((v, repr(m), repr(s)))
    return buf.getvalue()
