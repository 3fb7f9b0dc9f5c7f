"""Dataset loading, preprocessing and bootstrap resampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

TASKS = ("regression", "binary", "multiclass")

_MISSING_TOKENS = {"", "?", "na", "nan", "null", "none"}


class DataError(ValueError):
    """Raised for malformed input data."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus labels.

    ``categorical`` holds raw string levels for columns that still need
    one-hot encoding; after :func:`apply_preprocess` it is ``None`` and
    ``features`` is the full model-space matrix.
    """

    features: np.ndarray
    labels: np.ndarray
    task: str
    feature_names: tuple[str, ...]
    n_classes: int = 0
    categorical: np.ndarray | None = None
    categorical_names: tuple[str, ...] = ()
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        object.__setattr__(self, "features", X)
        n = X.shape[0]
        if self.categorical is not None:
            cat = np.asarray(self.categorical, dtype=object)
            if cat.ndim != 2 or cat.shape[0] != n:
                raise DataError("categorical block must have one row per sample")
            object.__setattr__(self, "categorical", cat)
        if n < 1 or self.n_features < 1:
            raise DataError("dataset needs at least one row and one feature")
        if not np.all(np.isfinite(X)):
            raise DataError("feature values must be finite")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match feature columns")

        if self.task == "regression":
            y = np.asarray(self.labels, dtype=np.float64)
            if not np.all(np.isfinite(y)):
                raise DataError("regression labels must be finite")
        else:
            y = np.asarray(self.labels)
            if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
                raise DataError("class labels must be integer indices")
            y = y.astype(np.int64)
            J = self.n_classes
            if self.task == "binary" and J != 2:
                raise DataError("binary task needs n_classes == 2")
            if self.task == "multiclass" and J <= 2:
                raise DataError("multiclass task needs more than 2 classes")
            if y.size and (y.min() < 0 or y.max() >= J):
                raise DataError(f"class labels must lie in 0..{J - 1}")
        if y.shape != (n,):
            raise DataError("labels must be a vector with one entry per row")
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        n_cat = 0 if self.categorical is None else self.categorical.shape[1]
        return self.features.shape[1] + n_cat

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            task=self.task,
            feature_names=self.feature_names,
            n_classes=self.n_classes,
            categorical=None if self.categorical is None else self.categorical[idx],
            categorical_names=self.categorical_names,
            classes=self.classes,
        )


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for :func:`load_csv`.

    Columns can be referred to by header name or by zero-based position;
    negative positions count from the end.
    """

    task: str
    label_col: int | str = -1
    categorical_cols: tuple[int | str, ...] = ()
    header: bool | None = None  # None: detect


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _resolve_column(ref, names: Sequence[str], width: int) -> int:
    if isinstance(ref, str) and not ref.lstrip("-").isdigit():
        if ref not in names:
            raise DataError(f"unknown column {ref!r}")
        return list(names).index(ref)
    pos = int(ref)
    if pos < 0:
        pos += width
    if not 0 <= pos < width:
        raise DataError(f"column index {ref} out of range for {width} columns")
    return pos


def _read_rows(path, header: bool | None):
    """Non-blank rows, column names and whether a header row was present."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"empty file: {path}")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"ragged row {i}: expected {width} columns, got {len(r)}")
    first = [c.strip() for c in rows[0]]
    names = [f"x{j}" for j in range(width)]
    if header is None:
        # A header row is one whose cells all fail numeric parsing.
        header = not any(_is_float(c) for c in first)
    if header:
        names = first
        rows = rows[1:]
        if not rows:
            raise DataError(f"empty file: {path}")
    return rows, names, header


def _parse_features(rows, num_pos, cat_pos, offset):
    X = np.empty((len(rows), len(num_pos)))
    for i, r in enumerate(rows):
        for k, j in enumerate(num_pos):
            cell = r[j].strip()
            if cell.lower() in _MISSING_TOKENS:
                raise DataError(f"missing value at ({i + offset},{j})")
            try:
                X[i, k] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric value at ({i + offset},{j}): {cell!r}") from None
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature value")
    cat = None
    if cat_pos:
        cat = np.array([[r[j].strip() for j in cat_pos] for r in rows], dtype=object)
        for i, row in enumerate(cat):
            for k, v in enumerate(row):
                if v.lower() in _MISSING_TOKENS:
                    raise DataError(f"missing value at ({i + offset},{cat_pos[k]})")
    return X, cat


def csv_layout(path, schema: CsvSchema) -> dict:
    """Column names and label/categorical positions of a training file."""
    _, names, header = _read_rows(path, schema.header)
    width = len(names)
    label = _resolve_column(schema.label_col, names, width)
    cats = sorted({_resolve_column(c, names, width) for c in schema.categorical_cols})
    return {"columns": list(names), "label": label, "categorical": cats, "header": header}


def load_features(path, columns: Sequence[str], label_pos: int,
                  categorical_pos: Sequence[int] = (), header: bool | None = None):
    """Read the feature block of a file for prediction.

    ``columns`` is the training file's column list. With a header row,
    features are matched by name; without one the file must hold the
    training columns in training order, with or without the label column.
    Returns ``(numeric, categorical_or_None)``.
    """
    rows, names, header = _read_rows(path, header)
    cat_pos = sorted(categorical_pos)
    num_pos = [j for j in range(len(columns)) if j != label_pos and j not in cat_pos]
    if header:
        wanted = [columns[j] for j in num_pos + cat_pos]
        missing = [c for c in wanted if c not in names]
        if missing:
            raise DataError(f"missing feature columns: {', '.join(missing)}")
        pos = [names.index(c) for c in wanted]
    elif len(names) == len(columns):
        pos = num_pos + cat_pos
    elif len(names) == len(columns) - 1:
        pos = [j - (j > label_pos) for j in num_pos + cat_pos]
    else:
        raise DataError(f"expected {len(columns) - 1} feature columns, got {len(names)}")
    k = len(num_pos)
    return _parse_features(rows, pos[:k], pos[k:], 2 if header else 1)


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a comma-delimited file into a :class:`Dataset`.

    Row order is preserved. Categorical columns are kept as text and are
    expanded later by :func:`fit_preprocess`. Missing values are rejected.
    """
    rows, names, header = _read_rows(path, schema.header)
    width = len(names)

    label_pos = _resolve_column(schema.label_col, names, width)
    cat_pos = sorted({_resolve_column(c, names, width) for c in schema.categorical_cols})
    if label_pos in cat_pos:
        raise DataError("label column cannot also be categorical")
    num_pos = [j for j in range(width) if j != label_pos and j not in cat_pos]
    offset = 2 if header else 1  # 1-based file line numbers in messages

    X, cat = _parse_features(rows, num_pos, cat_pos, offset)

    raw_labels = [r[label_pos].strip() for r in rows]
    for i, s in enumerate(raw_labels):
        if s.lower() in _MISSING_TOKENS:
            raise DataError(f"missing label at ({i + offset},{label_pos})")
    if schema.task == "regression":
        try:
            y = np.array([float(s) for s in raw_labels])
        except ValueError:
            raise DataError("non-numeric regression label") from None
        classes: tuple[str, ...] = ()
        J = 0
    else:
        classes = _sorted_levels(raw_labels)
        lookup = {c: i for i, c in enumerate(classes)}
        y = np.array([lookup[s] for s in raw_labels], dtype=np.int64)
        J = len(classes)
        if schema.task == "binary" and J != 2:
            raise DataError(f"binary task needs exactly 2 classes, found {J}")
        if schema.task == "multiclass" and J < 3:
            raise DataError(f"multiclass task needs at least 3 classes, found {J}")

    return Dataset(
        features=X,
        labels=y,
        task=schema.task,
        feature_names=tuple(names[j] for j in num_pos),
        n_classes=J,
        categorical=cat,
        categorical_names=tuple(names[j] for j in cat_pos),
        classes=classes,
    )


def _sorted_levels(values) -> tuple[str, ...]:
    levels = set(values)
    if all(_is_float(v) for v in levels):
        return tuple(sorted(levels, key=float))
    return tuple(sorted(levels))


@dataclass(frozen=True)
class PreprocessState:
    """Transforms fitted on a training set.

    Feature order in model space: numeric columns first (fit-time order),
    then one one-hot block per categorical column.
    """

    numeric_names: tuple[str, ...]
    one_hot_levels: tuple[tuple[str, tuple[str, ...]], ...]
    feature_min: np.ndarray
    feature_max: np.ndarray
    label_mean: float | None = None
    label_std: float | None = None
    task: str = "regression"
    n_classes: int = 0
    classes: tuple[str, ...] = ()

    @property
    def one_hot_map(self) -> dict[str, tuple[int, int]]:
        """Categorical column name -> [start, stop) range in model space."""
        out = {}
        start = len(self.numeric_names)
        for name, levels in self.one_hot_levels:
            out[name] = (start, start + len(levels))
            start += len(levels)
        return out

    @property
    def output_names(self) -> tuple[str, ...]:
        names = list(self.numeric_names)
        for col, levels in self.one_hot_levels:
            names.extend(f"{col}={lv}" for lv in levels)
        return tuple(names)

    def scale_labels(self, y):
        if self.label_std is None:
            return np.asarray(y)
        return (np.asarray(y, dtype=np.float64) - self.label_mean) / self.label_std

    def unscale_labels(self, y):
        if self.label_std is None:
            return np.asarray(y)
        return np.asarray(y, dtype=np.float64) * self.label_std + self.label_mean

    def to_dict(self) -> dict:
        return {
            "numeric_names": list(self.numeric_names),
            "one_hot_levels": [[c, list(lv)] for c, lv in self.one_hot_levels],
            "feature_min": self.feature_min.tolist(),
            "feature_max": self.feature_max.tolist(),
            "label_mean": self.label_mean,
            "label_std": self.label_std,
            "task": self.task,
            "n_classes": self.n_classes,
            "classes": list(self.classes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessState":
        return cls(
            numeric_names=tuple(d["numeric_names"]),
            one_hot_levels=tuple((c, tuple(lv)) for c, lv in d["one_hot_levels"]),
            feature_min=np.asarray(d["feature_min"], dtype=np.float64),
            feature_max=np.asarray(d["feature_max"], dtype=np.float64),
            label_mean=d["label_mean"],
            label_std=d["label_std"],
            task=d["task"],
            n_classes=d["n_classes"],
            classes=tuple(d["classes"]),
        )


def _one_hot(cat: np.ndarray | None, levels, n: int) -> np.ndarray:
    blocks = []
    for k, (_, lv) in enumerate(levels):
        lookup = {v: i for i, v in enumerate(lv)}
        block = np.zeros((n, len(lv)))
        for i, v in enumerate(cat[:, k]):
            j = lookup.get(v)
            if j is not None:
                block[i, j] = 1.0
        blocks.append(block)
    if not blocks:
        return np.zeros((n, 0))
    return np.hstack(blocks)


def fit_preprocess(ds: Dataset) -> PreprocessState:
    """Fit one-hot levels, [0, 1] feature scaling and (regression) z-scoring.

    One-hot encoding happens before scaling. The label standard deviation
    uses the population convention (denominator N).
    """
    levels = []
    for k, name in enumerate(ds.categorical_names):
        levels.append((name, _sorted_levels(ds.categorical[:, k].tolist())))
    levels = tuple(levels)
    X = np.hstack([ds.features, _one_hot(ds.categorical, levels, ds.features.shape[0])])
    label_mean = label_std = None
    if ds.task == "regression":
        label_mean = float(np.mean(ds.labels))
        label_std = float(np.std(ds.labels))
        if not label_std > 0:
            raise DataError("regression labels are constant; cannot z-normalize")
    return PreprocessState(
        numeric_names=ds.feature_names,
        one_hot_levels=levels,
        feature_min=X.min(axis=0),
        feature_max=X.max(axis=0),
        label_mean=label_mean,
        label_std=label_std,
        task=ds.task,
        n_classes=ds.n_classes,
        classes=ds.classes,
    )


def transform_features(state: PreprocessState, features, categorical=None) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(state.numeric_names):
        raise DataError(
            f"expected {len(state.numeric_names)} numeric columns, got "
            f"{X.shape[1] if X.ndim == 2 else X.ndim}"
        )
    n_cat = 0 if categorical is None else np.asarray(categorical).shape[1]
    if n_cat != len(state.one_hot_levels):
        raise DataError(
            f"expected {len(state.one_hot_levels)} categorical columns, got {n_cat}"
        )
    cat = None if categorical is None else np.asarray(categorical, dtype=object)
    X = np.hstack([X, _one_hot(cat, state.one_hot_levels, X.shape[0])])
    span = state.feature_max - state.feature_min
    safe = np.where(span > 0, span, 1.0)
    Z = (X - state.feature_min) / safe
    Z[:, span <= 0] = 0.0
    return np.clip(Z, 0.0, 1.0)


def apply_preprocess(state: PreprocessState, ds: Dataset) -> Dataset:
    """Map a raw dataset into model space using a fitted state.

    Scaled values outside the fit-time range are clipped into [0, 1];
    unseen categorical levels give an all-zero one-hot block.
    """
    if ds.task != state.task:
        raise DataError(f"task mismatch: state is {state.task}, dataset is {ds.task}")
    if tuple(ds.categorical_names) != tuple(c for c, _ in state.one_hot_levels):
        raise DataError("categorical columns differ from fit-time structure")
    Z = transform_features(state, ds.features, ds.categorical)
    y = state.scale_labels(ds.labels) if ds.task == "regression" else ds.labels
    return Dataset(
        features=Z,
        labels=y,
        task=ds.task,
        feature_names=state.output_names,
        n_classes=ds.n_classes,
        classes=ds.classes,
    )


def bootstrap_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise DataError("cannot bootstrap an empty dataset")
    return rng.integers(0, n, size=n)


def bootstrap(ds: Dataset, rng: np.random.Generator) -> Dataset:
    """Draw N rows uniformly with replacement."""
    return ds.subset(bootstrap_indices(ds.n_samples, rng))


def load_concrete() -> Dataset:
    """Concrete compressive strength data (1030 rows, 8 features), raw units."""
    ref = resources.files("boostforest") / "datasets" / "concrete.csv"
    with resources.as_file(ref) as p:
        return load_csv(p, CsvSchema(task="regression", label_col="compressive_strength"))


def load_seeds(path) -> Dataset:
    """Read the UCI seeds file (whitespace separated, label 1..3 last)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    raw = np.loadtxt(path)
    if raw.ndim != 2 or raw.shape[1] != 8:
        raise DataError("seeds file must have 8 whitespace-separated columns")
    y = raw[:, -1].astype(np.int64) - 1
    names = ("area", "perimeter", "compactness", "kernel_length",
             "kernel_width", "asymmetry", "groove_length")
    return Dataset(features=raw[:, :-1], labels=y, task="multiclass",
                   feature_names=names, n_classes=3, classes=("1", "2", "3"))
