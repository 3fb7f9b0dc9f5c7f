import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boostforest.losses import (
    EPS2,
    center_multiclass,
    finite_diff_check,
    grad_hess,
    leaf_impurity,
    low_weight_drop,
    one_hot,
    pointwise_loss,
    softmax,
    working_set_binary,
    working_set_multiclass,
)
from boostforest.node_models import LinearModel


def test_grad_hess_examples():
    gh = grad_hess("regression", np.array([2.0]), np.array([0.0]))
    assert (gh.g[0], gh.h[0]) == (-4.0, 2.0)
    gh = grad_hess("binary", np.array([1.0]), np.array([0.0]))
    assert (gh.g[0], gh.h[0]) == (-0.5, 0.25)
    gh = grad_hess("multiclass", np.array([0]), np.zeros((1, 3)))
    assert gh.g[0, 0] == pytest.approx(-2 / 3) and gh.h[0, 0] == pytest.approx(2 / 9)
    assert gh.g[0, 1] == pytest.approx(1 / 3)


def test_grad_hess_errors():
    with pytest.raises(ValueError):
        grad_hess("regression", np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        grad_hess("multiclass", np.array([0, 1]), np.zeros((2, 2)))


def test_hessian_floor():
    gh = grad_hess("binary", np.array([1.0]), np.array([800.0]))
    assert gh.h[0] == EPS2


def test_finite_difference_examples():
    rng = np.random.default_rng(0)
    F = rng.uniform(-3, 3, size=50)
    y = rng.integers(0, 2, size=50).astype(float)
    assert finite_diff_check("binary", y, F) < 1e-6
    assert finite_diff_check("regression", rng.normal(size=50), rng.normal(size=50) * 5) < 1e-8
    Fm = rng.normal(size=(30, 4)) * 2
    assert finite_diff_check("multiclass", rng.integers(0, 4, size=30), Fm) < 1e-6
    with pytest.raises(ValueError):
        finite_diff_check("binary", y, F, delta=0.0)


def test_softmax_properties():
    rng = np.random.default_rng(1)
    P = softmax(rng.normal(size=(200, 5)) * 30)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(P > 0) or np.all(P >= 0)
    P = softmax(rng.normal(size=(200, 5)))
    assert np.all(P > 0)


def test_working_set_binary_examples():
    ws = working_set_binary(np.array([1.0]), np.array([0.0]), filter_low_weight=False)
    assert ws.z[0] == 2.0 and ws.weights[0] == 0.25
    ws = working_set_binary(np.array([1.0]), np.array([-10.0]), filter_low_weight=False)
    assert ws.z[0] == 4.0


def test_exact_bottom_five_removed():
    rng = np.random.default_rng(2)
    F = rng.permutation(np.linspace(0.1, 5.0, 100))  # distinct weights p(1-p), decreasing in F
    y = rng.integers(0, 2, size=100).astype(float)
    ws = working_set_binary(y, F)
    removed = set(range(100)) - set(ws.indices.tolist())
    assert removed == set(np.argsort(F)[-5:].tolist())
    assert ws.indices.size == 95


def test_small_sets_are_not_filtered():
    F = np.linspace(0, 3, 19)
    ws = working_set_binary(np.ones(19), F)
    assert ws.indices.size == 19
    assert low_weight_drop(np.ones(19)).size == 0
    assert low_weight_drop(np.ones(40)).tolist() == [0, 1]


def test_multiclass_working_set_examples():
    Y = one_hot(np.array([0]), 3)
    sets = working_set_multiclass(Y, np.zeros((1, 3)), filter_low_weight=False)
    assert sets[0].z[0] == pytest.approx(3.0) and sets[0].weights[0] == pytest.approx(2 / 9)
    sets = working_set_multiclass(Y, np.array([[40.0, 0.0, 0.0]]), filter_low_weight=False)
    assert all(abs(s.z[0]) <= 4 for s in sets)


def test_multiclass_filter_is_per_class():
    rng = np.random.default_rng(3)
    F = rng.normal(size=(40, 3)) * 2
    y = rng.integers(0, 3, size=40)
    sets = working_set_multiclass(y, F)
    kept = [set(s.indices.tolist()) for s in sets]
    assert kept[0] != kept[1] or kept[1] != kept[2]
    for j, s in enumerate(sets):
        assert s.indices.size == 38  # floor(0.05 * 40) = 2 removed per class


def test_center_multiclass_examples():
    a = LinearModel(np.zeros(2), 1.0)
    z = LinearModel.zero(2)
    out = center_multiclass([a, z, z])
    np.testing.assert_allclose([m.b for m in out], [4 / 9, -2 / 9, -2 / 9], atol=1e-15)
    same = center_multiclass([LinearModel(np.array([1.0, 2.0]), 3.0)] * 4)
    for m in same:
        np.testing.assert_allclose(m.w, 0.0, atol=1e-15)
        assert m.b == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(4)
    models = [LinearModel(rng.normal(size=3), rng.normal()) for _ in range(5)]
    X = rng.normal(size=(20, 3))
    total = sum(m.predict(X) for m in center_multiclass(models))
    np.testing.assert_allclose(total, 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        center_multiclass([a, LinearModel.zero(3), z])


def test_leaf_impurity_examples():
    assert leaf_impurity("regression", np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert leaf_impurity("binary", np.array([0, 1]), np.zeros(2)) == pytest.approx(2 * math.log(2))
    assert leaf_impurity("regression", np.array([0.0, 2.0]), np.zeros(2)) == pytest.approx(
        2 * math.sqrt(2))


def test_pointwise_loss_values():
    v = pointwise_loss("multiclass", np.array([1]), np.zeros((1, 3)))
    assert v[0] == pytest.approx(math.log(3))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=20, max_size=80), st.integers(0, 2**31))
def test_working_set_invariants(F, seed):
    F = np.array(F)
    y = np.random.default_rng(seed).integers(0, 2, size=F.size).astype(float)
    ws = working_set_binary(y, F)
    assert np.all(ws.weights >= EPS2)
    assert np.all(np.abs(ws.z) <= 4.0)
    assert ws.indices.size >= 0.95 * F.size - 1
    assert set(ws.indices.tolist()) <= set(range(F.size))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-4, 4), min_size=1, max_size=20))
def test_clip_is_noop_inside_bound(zs):
    # with weights 1/4 (F = 0) z = 4 (y - 1/2) lies in [-2, 2] and is untouched
    y = (np.array(zs) > 0).astype(float)
    ws = working_set_binary(y, np.zeros(len(zs)), filter_low_weight=False)
    np.testing.assert_array_equal(ws.z, 4 * (y - 0.5))
