"""Per-node regression models: ridge, weighted ridge, ELM and linear SVR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass(frozen=True, eq=False)
class LinearModel:
    """f(x) = w . x + b"""

    w: np.ndarray
    b: float

    @classmethod
    def zero(cls, n_features: int) -> "LinearModel":
        return cls(np.zeros(n_features), 0.0)

    @property
    def n_features(self) -> int:
        return self.w.shape[0]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.w.shape[0]:
            raise ValueError(f"expected {self.w.shape[0]} features, got {X.shape[-1]}")
        return X @ self.w + self.b

    def coef_sq_norm(self) -> float:
        return float(self.w @ self.w)


def sigmoid(a):
    """Logistic function, evaluated without overflow warnings."""
    a = np.asarray(a, dtype=np.float64)
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True, eq=False)
class ElmModel:
    """Single hidden layer with fixed random weights and a linear read-out."""

    hidden_weights: np.ndarray  # (M, D)
    hidden_bias: np.ndarray  # (M,)
    output: LinearModel

    @property
    def n_features(self) -> int:
        return self.hidden_weights.shape[1]

    def hidden(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.hidden_weights.shape[1]:
            raise ValueError(
                f"expected {self.hidden_weights.shape[1]} features, got {X.shape[-1]}"
            )
        return sigmoid(X @ self.hidden_weights.T + self.hidden_bias)

    def predict(self, X) -> np.ndarray:
        return self.output.predict(self.hidden(X))

    def coef_sq_norm(self) -> float:
        return self.output.coef_sq_norm()


@dataclass(frozen=True, eq=False)
class ClassModels:
    """One linear model per class; predict returns an (N, J) score matrix."""

    models: tuple[LinearModel, ...]

    @classmethod
    def zero(cls, n_features: int, n_classes: int) -> "ClassModels":
        return cls(tuple(LinearModel.zero(n_features) for _ in range(n_classes)))

    @property
    def n_features(self) -> int:
        return self.models[0].n_features

    def predict(self, X) -> np.ndarray:
        W = np.stack([m.w for m in self.models], axis=1)
        b = np.array([m.b for m in self.models])
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != W.shape[0]:
            raise ValueError(f"expected {W.shape[0]} features, got {X.shape[-1]}")
        return X @ W + b

    def coef_sq_norm(self) -> float:
        return float(sum(m.coef_sq_norm() for m in self.models))


@dataclass(frozen=True)
class SvrParams:
    C: float
    epsilon: float

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("SVR C must be positive")
        if not self.epsilon >= 0:
            raise ValueError("SVR epsilon must be non-negative")


def predict(model, x):
    """Evaluate a node model on one sample (1-D) or a batch (2-D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return model.predict(x[None, :])[0]
    return model.predict(x)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("inputs must be finite")


def _spd_solve(A, rhs):
    try:
        c = scipy.linalg.cho_factor(A, check_finite=False)
    except np.linalg.LinAlgError:
        A = A + 1e-10 * np.eye(A.shape[0])
        try:
            c = scipy.linalg.cho_factor(A, check_finite=False)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(A, rhs, rcond=None)[0]
    return scipy.linalg.cho_solve(c, rhs, check_finite=False)


def fit_weighted_ridge(X, y, weights, lam: float) -> LinearModel:
    """Minimize sum_n w_n (y_n - w.x_n - b)^2 + lam * ||w||^2.

    The intercept is not penalized: the problem is solved on weighted-centered
    data and ``b`` recovered from the weighted means.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sw = np.asarray(weights, dtype=np.float64)
    _check_finite(X, y, sw)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or sw.shape != y.shape:
        raise ValueError("X, y and weights have inconsistent shapes")
    if X.shape[0] < 1:
        raise ValueError("need at least one sample")
    if np.any(sw < 0):
        raise ValueError("weights must be non-negative")
    total = sw.sum()
    if not total > 0:
        raise ValueError("all weights are zero")
    if lam < 0:
        raise ValueError("lambda must be non-negative")

    x_mean = sw @ X / total
    y_mean = sw @ y / total
    Xc = X - x_mean
    yc = y - y_mean
    Xw = Xc * sw[:, None]
    A = Xw.T @ Xc
    A[np.diag_indices_from(A)] += lam
    w = _spd_solve(A, Xw.T @ yc)
    return LinearModel(w, float(y_mean - x_mean @ w))


def fit_ridge(X, y, lam: float) -> LinearModel:
    """Ridge regression with an unpenalized intercept."""
    y = np.asarray(y, dtype=np.float64)
    return fit_weighted_ridge(X, y, np.ones(y.shape[0]), lam)


def ridge_objective(model: LinearModel, X, y, lam: float, weights=None) -> float:
    r = np.asarray(y) - model.predict(X)
    sw = np.ones_like(r) if weights is None else np.asarray(weights)
    return float(sw @ (r * r) + lam * model.coef_sq_norm())


def fit_elm(X, y, lam: float, n_hidden: int, rng: np.random.Generator) -> ElmModel:
    """ELM with Uniform[-1, 1] hidden weights/biases and sigmoid units.

    The read-out layer is :func:`fit_ridge` on the hidden activations, so it
    carries an unpenalized bias.
    """
    if n_hidden < 1:
        raise ValueError("ELM needs at least one hidden node")
    X = np.asarray(X, dtype=np.float64)
    _check_finite(X, np.asarray(y, dtype=np.float64))
    W = rng.uniform(-1.0, 1.0, size=(n_hidden, X.shape[1]))
    c = rng.uniform(-1.0, 1.0, size=n_hidden)
    H = sigmoid(X @ W.T + c)
    return ElmModel(W, c, fit_ridge(H, y, lam))


def svr_objective(w, b, X, y, C: float, epsilon: float) -> float:
    """0.5 ||w||^2 + C * sum max(0, |y - w.x - b| - epsilon)"""
    r = np.asarray(y) - np.asarray(X) @ w - b
    return float(0.5 * (w @ w) + C * np.maximum(np.abs(r) - epsilon, 0.0).sum())


def linear_svr_path(X, y, params: SvrParams, max_iter: int = 50, tol: float = 1e-7):
    """Fit a linear epsilon-SVR; return ``(model, objective_history)``.

    Majorize-minimize (iteratively reweighted least squares). The tube loss
    is rewritten as ``0.5 |r - eps| + 0.5 |r + eps| - eps`` and each
    absolute value is bounded by the quadratic ``u^2 / (2 |u0|) + |u0| / 2``
    at the current residuals, so every iteration is one weighted ridge
    solve. ``|u0|`` is floored at a tiny multiple of the target spread.
    The history holds the best exact objective seen after each iteration
    and is therefore non-increasing. The intercept is not penalized.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_finite(X, y)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValueError("X and y have inconsistent shapes")
    C, eps = float(params.C), float(params.epsilon)
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])

    def objective(theta):
        return svr_objective(theta[:d], theta[d], X, y, C, eps)

    best_theta = np.zeros(d + 1)
    best = np.inf
    for b0 in (0.0, float(np.mean(y)), float(np.median(y))):
        cand = np.zeros(d + 1)
        cand[d] = b0
        val = objective(cand)
        if val < best:
            best_theta, best = cand, val
    history = [best]
    if best == 0.0:
        return LinearModel(best_theta[:d].copy(), float(best_theta[d])), history

    floor = 1e-6 * max(float(np.max(np.abs(y - best_theta[d]))), 1e-12)
    ridge = np.ones(d + 1)
    ridge[d] = 0.0
    theta = best_theta
    for it in range(max_iter):
        r = y - Xa @ theta
        u_lo = np.maximum(np.abs(r - eps), floor)
        u_hi = np.maximum(np.abs(r + eps), floor)
        # Surrogate in r: (C/2) [(r-eps)^2/(2 u_lo) + (r+eps)^2/(2 u_hi)]
        # = (s/2) (r - target)^2 + const
        s = 0.5 * C * (1.0 / u_lo + 1.0 / u_hi)
        target = 0.5 * C * eps * (1.0 / u_lo - 1.0 / u_hi) / s
        Xs = Xa * s[:, None]
        H = Xs.T @ Xa
        H[np.diag_indices_from(H)] += ridge
        theta = _spd_solve(H, Xs.T @ (y - target))
        val = objective(theta)
        gain = best - val
        if val < best:
            best_theta, best = theta.copy(), val
        history.append(best)
        if it >= 3 and gain <= tol * best:
            break
    return LinearModel(best_theta[:d].copy(), float(best_theta[d])), history


def fit_linear_svr(X, y, params: SvrParams) -> LinearModel:
    """Linear epsilon-insensitive SVR with an unpenalized intercept."""
    return linear_svr_path(X, y, params)[0]
