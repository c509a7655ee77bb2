import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forecastbench.errors import DimensionError, DomainError, NumericError
from forecastbench.tensor import (add_bias, as_tensor, ew_map, ew_zip, matmul, reduce_mean, relu,
                                  sigmoid)


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += a[i, p] * b[p, j]
            out[i, j] = s
    return out


def test_matmul_identity():
    assert np.array_equal(matmul(np.eye(2), [[5], [6]]), [[5], [6]])


def test_matmul_hand():
    assert np.array_equal(matmul([[1, 2], [3, 4]], [[5], [6]]), [[17], [39]])


def test_matmul_against_triple_loop():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m, k, n = rng.integers(1, 9, size=3)
        a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
        np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_does_not_alias():
    a = np.eye(2)
    out = matmul(a, a)
    out[0, 0] = 9
    assert a[0, 0] == 1


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(DimensionError):
        matmul(np.ones(3), np.ones((3, 1)))


def test_matmul_associative():
    rng = np.random.default_rng(1)
    for _ in range(50):
        m, k, l, n = rng.integers(1, 9, size=4)
        a, b, c = rng.normal(size=(m, k)), rng.normal(size=(k, l)), rng.normal(size=(l, n))
        left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
        scale = np.maximum(np.abs(left), 1.0)
        assert np.all(np.abs(left - right) / scale < 1e-9)


def test_relu_and_sigmoid():
    assert np.array_equal(ew_map([1, -2, 0], relu), [1, 0, 0])
    assert ew_map([0.0], sigmoid)[0] == 0.5


def test_sigmoid_extremes_are_finite():
    y = sigmoid(np.array([-800.0, 800.0]))
    assert y[0] == 0.0 and y[1] == 1.0


def test_add_matches_scalar_loop():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(3, 4, 2)), rng.normal(size=(3, 4, 2))
    out = ew_zip(x, y, np.add)
    for idx in np.ndindex(x.shape):
        assert out[idx] == x[idx] + y[idx]


def test_zip_shape_mismatch():
    with pytest.raises(DimensionError):
        ew_zip(np.ones(3), np.ones(4), np.add)


def test_non_finite_is_an_error():
    with np.errstate(divide="ignore"), pytest.raises(NumericError):
        ew_map([1.0, 0.0], lambda x: 1.0 / x)


def test_bias_is_the_only_broadcast():
    assert np.array_equal(add_bias(np.zeros((2, 3)), np.arange(3.0)), [[0, 1, 2], [0, 1, 2]])
    with pytest.raises(DimensionError):
        add_bias(np.zeros((2, 3)), np.zeros(2))


def test_rank_limit():
    with pytest.raises(DimensionError):
        as_tensor(np.zeros((1, 1, 1, 1)))


def test_reduce_mean():
    assert reduce_mean([1, 2, 3]) == 2
    assert reduce_mean([0.7] * 9) == pytest.approx(0.7, abs=1e-15)
    with pytest.raises(DomainError):
        reduce_mean([])


def test_reduce_mean_against_compensated_sum():
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.normal(size=int(rng.integers(1, 500))) * 10
        assert abs(reduce_mean(x) - math.fsum(x) / x.size) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30),
       st.floats(-10, 10))
def test_mean_is_linear(xs, alpha):
    x = np.array(xs)
    assert abs(reduce_mean(alpha * x) - alpha * reduce_mean(x)) <= 1e-12 * max(1.0, np.abs(alpha * x).max())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_add_commutes(xs):
    x = np.array(xs)
    y = x[::-1].copy()
    assert np.array_equal(ew_zip(x, y, np.add), ew_zip(y, x, np.add))
