"""Losses, their derivatives, LogitBoost working sets and leaf impurity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np

from .node_models import LinearModel, sigmoid

EPS2 = 2.0 * np.finfo(np.float64).eps
Y_MAX = 4.0
LOW_WEIGHT_QUANTILE = 0.05


def softmax(F) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    e = np.exp(F - F.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def one_hot(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    Y = np.zeros((y.shape[0], n_classes))
    Y[np.arange(y.shape[0]), y] = 1.0
    return Y


def _as_targets(task, y, F):
    """Class indices become one-hot rows for the multiclass task."""
    F = np.asarray(F, dtype=np.float64)
    y = np.asarray(y)
    if task == "multiclass":
        if F.ndim != 2 or F.shape[1] < 3:
            raise ValueError("multiclass outputs must be N x J with J >= 3")
        if y.ndim == 1:
            y = one_hot(y, F.shape[1])
        if y.shape != F.shape:
            raise ValueError("label and output shapes differ")
        return y.astype(np.float64), F
    if task not in ("regression", "binary"):
        raise ValueError(f"unknown task {task!r}")
    if y.shape != F.shape:
        raise ValueError("label and output lengths differ")
    return y.astype(np.float64), F


def log_sigmoid(a):
    a = np.asarray(a, dtype=np.float64)
    return -np.logaddexp(0.0, -a)


def pointwise_loss(task, y, F) -> np.ndarray:
    """Per-sample loss: squared error, binary or multiclass cross-entropy."""
    y, F = _as_targets(task, y, F)
    if task == "regression":
        return (y - F) ** 2
    if task == "binary":
        return -(y * log_sigmoid(F) + (1.0 - y) * log_sigmoid(-F))
    shifted = F - F.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return -(y * log_p).sum(axis=1)


@dataclass(frozen=True)
class GradHess:
    g: np.ndarray
    h: np.ndarray


def grad_hess(task, y, F) -> GradHess:
    """First and second derivatives of the loss w.r.t. the outputs F.

    For the multiclass task both arrays are N x J (diagonal of the Hessian).
    ``h`` is floored at twice machine epsilon.
    """
    y, F = _as_targets(task, y, F)
    if task == "regression":
        g = 2.0 * (F - y)
        h = np.full_like(F, 2.0)
    else:
        p = sigmoid(F) if task == "binary" else softmax(F)
        g = p - y
        h = p * (1.0 - p)
    return GradHess(g, np.maximum(h, EPS2))


def _mp_loss(task, y_row, f_row):
    if task == "regression":
        return (y_row - f_row) ** 2
    if task == "binary":
        p = 1 / (1 + mpmath.exp(-f_row))
        return -(y_row * mpmath.log(p) + (1 - y_row) * mpmath.log(1 - p))
    top = max(f_row)
    log_norm = top + mpmath.log(mpmath.fsum(mpmath.exp(f - top) for f in f_row))
    return -mpmath.fsum(yj * (f - log_norm) for yj, f in zip(y_row, f_row))


def finite_diff_check(task, y, F, delta: float = 1e-5) -> float:
    """Largest gap between analytic g, h and centered differences of the loss.

    The loss is evaluated in 40-digit arithmetic so the difference quotients
    are limited by truncation error only.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    y, F = _as_targets(task, y, F)
    gh = grad_hess(task, y, F)
    d = mpmath.mpf(delta)
    worst = 0.0
    with mpmath.workdps(40):
        for n in range(F.shape[0]):
            if F.ndim == 1:
                yn, fn = mpmath.mpf(float(y[n])), mpmath.mpf(float(F[n]))
                lp, l0, lm = (_mp_loss(task, yn, fn + s) for s in (d, 0, -d))
                pairs = [(gh.g[n], gh.h[n], lp, l0, lm)]
            else:
                yn = [mpmath.mpf(float(v)) for v in y[n]]
                fn = [mpmath.mpf(float(v)) for v in F[n]]
                l0 = _mp_loss(task, yn, fn)
                pairs = []
                for j in range(F.shape[1]):
                    up, down = list(fn), list(fn)
                    up[j] += d
                    down[j] -= d
                    pairs.append((gh.g[n, j], gh.h[n, j], _mp_loss(task, yn, up), l0,
                                  _mp_loss(task, yn, down)))
            for g, h, lp, l0, lm in pairs:
                g_fd = (lp - lm) / (2 * d)
                h_fd = (lp - 2 * l0 + lm) / d**2
                worst = max(worst, abs(float(g_fd) - g), abs(float(h_fd) - h))
    return worst


@dataclass(frozen=True)
class WorkingSet:
    indices: np.ndarray
    z: np.ndarray
    weights: np.ndarray


def low_weight_drop(w) -> np.ndarray:
    """Indices of the floor(0.05 N) lowest weights (none when N < 20).

    With distinct weights these are exactly the samples whose weight does
    not exceed the value at 1-based rank floor(0.05 N). Ties are broken by
    sample order so that no more than floor(0.05 N) samples are dropped.
    """
    k = int(np.floor(LOW_WEIGHT_QUANTILE * len(w)))
    return np.argsort(np.asarray(w), kind="stable")[:k]


def _working_set(y, p, filter_low_weight: bool, y_max: float) -> WorkingSet:
    w = np.maximum(p * (1.0 - p), EPS2)
    z = np.clip((y - p) / w, -y_max, y_max)
    keep = np.ones(len(w), dtype=bool)
    if filter_low_weight:
        keep[low_weight_drop(w)] = False
    idx = np.flatnonzero(keep)
    return WorkingSet(idx, z[idx], w[idx])


def working_set_binary(y, F, filter_low_weight: bool = True, y_max: float = Y_MAX) -> WorkingSet:
    """Clipped Newton pseudo-responses and weights for the binary loss."""
    y, F = _as_targets("binary", y, F)
    return _working_set(y, sigmoid(F), filter_low_weight, y_max)


def working_set_multiclass(Y, F, filter_low_weight: bool = True,
                           y_max: float = Y_MAX) -> list[WorkingSet]:
    """One working set per class, each filtered independently."""
    Y, F = _as_targets("multiclass", Y, F)
    P = softmax(F)
    return [_working_set(Y[:, j], P[:, j], filter_low_weight, y_max) for j in range(F.shape[1])]


def center_multiclass(models: Sequence[LinearModel]) -> list[LinearModel]:
    """f_j <- (J-1)/J * (f_j - mean_i f_i), applied to coefficients and intercepts."""
    J = len(models)
    if J < 3:
        raise ValueError("centering needs at least 3 class models")
    dims = {m.w.shape for m in models}
    if len(dims) != 1:
        raise ValueError("class models have different dimensions")
    W = np.stack([m.w for m in models])
    b = np.array([m.b for m in models])
    scale = (J - 1) / J
    W = scale * (W - W.mean(axis=0))
    b = scale * (b - b.mean())
    return [LinearModel(W[j], float(b[j])) for j in range(J)]


def leaf_impurity(task, y, F, count: int | None = None) -> float:
    """RMSE (regression) or mean cross-entropy (classification) times count."""
    y, F = _as_targets(task, y, F)
    n = len(F) if count is None else count
    if n < 1:
        raise ValueError("leaf must hold at least one sample")
    if task == "regression":
        return float(np.sqrt(np.mean((y - F) ** 2)) * n)
    return float(np.mean(pointwise_loss(task, y, F)) * n)
