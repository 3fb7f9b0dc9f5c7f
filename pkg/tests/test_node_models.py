import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boostforest.node_models import (
    ElmModel,
    LinearModel,
    SvrParams,
    fit_elm,
    fit_linear_svr,
    fit_ridge,
    fit_weighted_ridge,
    linear_svr_path,
    predict,
    ridge_objective,
    sigmoid,
    svr_objective,
)


def dense_ridge_oracle(X, y, weights, lam):
    """Augmented normal equations with an unpenalized intercept column."""
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    P = lam * np.eye(Xa.shape[1])
    P[-1, -1] = 0.0
    W = np.diag(weights)
    theta = np.linalg.solve(Xa.T @ W @ Xa + P, Xa.T @ W @ y)
    return theta[:-1], theta[-1]


def test_ridge_exact_line():
    m = fit_ridge(np.array([[1.0], [2.0]]), np.array([1.0, 2.0]), 0.0)
    assert m.w[0] == pytest.approx(1.0, abs=1e-12) and m.b == pytest.approx(0.0, abs=1e-12)


def test_ridge_constant_target():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 3))
    X -= X.mean(axis=0)
    m = fit_ridge(X, np.full(20, 4.2), 0.01)
    assert np.abs(m.w).max() < 1e-6 and m.b == pytest.approx(4.2)


def test_ridge_three_points_matches_exact_fraction():
    # exact: w = 40/21, b = -5/21
    m = fit_ridge(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 1.0, 4.0]), 0.1)
    assert m.w[0] == pytest.approx(40 / 21, abs=1e-8)
    assert m.b == pytest.approx(-5 / 21, abs=1e-8)


def test_weighted_ridge_matches_exact_fraction():
    # exact: w = 40/21, b = -17/42
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0.0, 1.0, 4.0])
    m = fit_weighted_ridge(X, y, np.array([1.0, 2.0, 1.0]), 0.1)
    assert m.w[0] == pytest.approx(40 / 21, abs=1e-8)
    assert m.b == pytest.approx(-17 / 42, abs=1e-8)


def test_weighted_ridge_random_vs_dense_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        X = rng.uniform(size=(30, 4))
        y = rng.normal(size=30)
        w = rng.uniform(0.01, 2, size=30)
        lam = float(rng.choice([0.0001, 0.01, 1.0]))
        m = fit_weighted_ridge(X, y, w, lam)
        w_ref, b_ref = dense_ridge_oracle(X, y, w, lam)
        np.testing.assert_allclose(m.w, w_ref, atol=1e-8)
        assert m.b == pytest.approx(b_ref, abs=1e-8)


def test_weighted_ridge_unit_weights_is_ridge():
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(15, 3)), rng.normal(size=15)
    a = fit_ridge(X, y, 0.1)
    b = fit_weighted_ridge(X, y, np.ones(15), 0.1)
    np.testing.assert_allclose(a.w, b.w, atol=1e-12)


def test_weighted_ridge_zero_weight_drops_sample():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(10, 2)), rng.normal(size=10)
    w = np.ones(10)
    w[4] = 0.0
    a = fit_weighted_ridge(X, y, w, 0.1)
    keep = np.arange(10) != 4
    b = fit_ridge(X[keep], y[keep], 0.1)
    np.testing.assert_allclose(a.w, b.w, atol=1e-10)
    assert a.b == pytest.approx(b.b, abs=1e-10)


def test_weighted_ridge_errors():
    X = np.ones((2, 1))
    with pytest.raises(ValueError, match="zero"):
        fit_weighted_ridge(X, np.ones(2), np.zeros(2), 0.1)
    with pytest.raises(ValueError, match="finite"):
        fit_ridge(np.array([[np.inf], [1.0]]), np.ones(2), 0.1)


def test_ridge_huge_lambda():
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(50, 3)), rng.normal(size=50) + 3
    m = fit_ridge(X, y, 1e9)
    assert np.linalg.norm(m.w) < 1e-3
    assert m.b == pytest.approx(y.mean(), abs=1e-3)


def test_ridge_local_optimality_probe():
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    lam = 0.3
    m = fit_ridge(X, y, lam)
    best = ridge_objective(m, X, y, lam)
    assert best <= ridge_objective(LinearModel.zero(3), X, y, lam)
    for _ in range(100):
        d = rng.normal(scale=1e-3, size=4)
        probe = LinearModel(m.w + d[:3], m.b + d[3])
        assert best <= ridge_objective(probe, X, y, lam) + 1e-12


def test_singular_design_is_handled():
    X = np.ones((5, 2))  # rank-deficient after centering
    m = fit_ridge(X, np.arange(5.0), 0.0)
    assert np.all(np.isfinite(m.w))


def test_predict_linear():
    m = LinearModel(np.array([1.0, -1.0]), 0.5)
    assert predict(m, np.array([2.0, 1.0])) == 1.5
    assert predict(LinearModel.zero(3), np.array([4.0, 5.0, 6.0])) == 0.0
    with pytest.raises(ValueError):
        predict(m, np.array([1.0, 2.0, 3.0]))


def test_predict_elm_hand_computed():
    m = ElmModel(np.array([[1.0, -1.0], [0.5, 0.5]]), np.array([0.0, -1.0]),
                 LinearModel(np.array([2.0, -1.0]), 0.5))
    # 2 sig(-1) - sig(0.5) + 0.5 evaluated in 30-digit arithmetic
    assert predict(m, np.array([1.0, 2.0])) == pytest.approx(0.4154235115381357, abs=1e-15)


def test_sigmoid_extremes():
    v = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(v, [0.0, 0.5, 1.0])


def test_elm_constant_target_and_determinism():
    rng = np.random.default_rng(6)
    X = rng.uniform(size=(40, 3))
    m = fit_elm(X, np.full(40, 2.5), 0.01, 10, np.random.default_rng(1))
    assert np.abs(m.predict(X) - 2.5).max() < 1e-3
    a = fit_elm(X, X[:, 0], 0.01, 10, np.random.default_rng(9))
    b = fit_elm(X, X[:, 0], 0.01, 10, np.random.default_rng(9))
    np.testing.assert_array_equal(a.hidden_weights, b.hidden_weights)
    np.testing.assert_array_equal(a.output.w, b.output.w)
    assert np.all(np.abs(a.hidden_weights) <= 1) and np.all(np.abs(a.hidden_bias) <= 1)


def test_elm_output_layer_matches_ridge_oracle():
    rng = np.random.default_rng(7)
    X, y = rng.uniform(size=(50, 3)), rng.normal(size=50)
    m = fit_elm(X, y, 0.1, 8, np.random.default_rng(3))
    H = 1.0 / (1.0 + np.exp(-(X @ m.hidden_weights.T + m.hidden_bias)))
    w_ref, b_ref = dense_ridge_oracle(H, y, np.ones(50), 0.1)
    np.testing.assert_allclose(m.output.w, w_ref, atol=1e-8)
    assert m.output.b == pytest.approx(b_ref, abs=1e-8)


def test_svr_constant_target_inside_tube():
    m = fit_linear_svr(np.array([[1.0], [2.0], [3.0]]), np.array([2.0, 2.0, 2.0]), SvrParams(5.0, 0.5))
    assert abs(m.w[0]) < 1e-6 and m.b == pytest.approx(2.0, abs=1e-6)


def test_svr_wide_tube_gives_flat_model():
    rng = np.random.default_rng(8)
    X, y = rng.uniform(size=(30, 2)), rng.uniform(-0.5, 0.5, size=30)
    m = fit_linear_svr(X, y, SvrParams(1.0, 2.0))
    np.testing.assert_allclose(m.w, 0.0, atol=1e-9)


def test_svr_three_points_near_grid_oracle():
    # brute-force grid over (w, b) in [-2, 2]^2 at step 0.001: minimum 0.405 (w=0.9, b=0.2)
    X = np.array([[1.0], [2.0], [3.0]])
    y = np.array([1.0, 2.0, 3.0])
    m = fit_linear_svr(X, y, SvrParams(10.0, 0.1))
    obj = svr_objective(m.w, m.b, X, y, 10.0, 0.1)
    assert obj <= 0.405 * 1.05


def test_svr_history_non_increasing_and_beats_zero():
    rng = np.random.default_rng(9)
    for _ in range(10):
        X = rng.uniform(size=(60, 4))
        y = X @ rng.normal(size=4) + 0.3 * rng.normal(size=60)
        p = SvrParams(float(rng.choice([0.1, 1, 10])), float(rng.choice([0.1, 0.4])))
        m, hist = linear_svr_path(X, y, p)
        assert all(b <= a for a, b in zip(hist, hist[1:]))
        assert svr_objective(m.w, m.b, X, y, p.C, p.epsilon) <= svr_objective(
            np.zeros(4), 0.0, X, y, p.C, p.epsilon)


def test_svr_params_validation():
    with pytest.raises(ValueError):
        SvrParams(0.0, 0.1)
    with pytest.raises(ValueError):
        SvrParams(1.0, -0.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0001, 0.01, 1.0]))
def test_ridge_deterministic(seed, lam):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(12, 3)), rng.normal(size=12)
    a, b = fit_ridge(X, y, lam), fit_ridge(X, y, lam)
    np.testing.assert_array_equal(a.w, b.w)
    assert a.b == b.b
