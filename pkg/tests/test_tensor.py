from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from quadvuln.errors import NumericError
from quadvuln.nn import tensor as T
from quadvuln.nn.tensor import Tensor


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def check_unary(op, x: np.ndarray, tol: float = 1e-6) -> None:
    rng = np.random.default_rng(0)
    w = rng.normal(size=op(Tensor(x)).shape)
    leaf = Tensor(x.copy(), requires_grad=True)
    T.mul(op(leaf), w).backward(np.ones_like(w))
    expected = numeric_grad(lambda z: float((op(Tensor(z)).data * w).sum()), x.copy())
    np.testing.assert_allclose(leaf.grad, expected, rtol=tol, atol=tol)


def test_elementwise_gradients():
    x = np.random.default_rng(1).normal(size=(3, 4))
    check_unary(T.sigmoid, x)
    check_unary(lambda t: T.scale(t, -2.5), x)
    check_unary(lambda t: T.mul(t, t), x)
    check_unary(lambda t: T.add(t, np.arange(4.0)), x)
    check_unary(T.relu, x + 0.05 * np.sign(x))  # keep away from the kink


def test_shape_op_gradients():
    x = np.random.default_rng(2).normal(size=(2, 3, 4))
    check_unary(T.transpose, x)
    check_unary(lambda t: T.take(t, (slice(None), slice(1, 3))), x)
    check_unary(lambda t: T.pad_axis(t, 1, 5), x)
    check_unary(lambda t: T.reshape(t, (6, 4)), x)
    check_unary(lambda t: T.mean(t, axis=(1, 2)), x)
    check_unary(lambda t: T.concat([t, T.scale(t, 2.0)], axis=2), x)
    check_unary(lambda t: T.permute_rows(t, np.array([[2, 0, 1], [1, 2, 0]])), x)


def test_matmul_gradients_including_shared_weight():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=(4, 5))
    check_unary(lambda t: T.matmul(t, w), a)
    check_unary(lambda t: T.matmul(a, t), w)


def test_masked_softmax():
    x = np.array([[1.0, 2.0, 3.0], [0.5, 0.5, 9.0]])
    mask = np.array([True, True, False])
    out = T.masked_softmax(Tensor(x), mask).data
    assert out[:, 2].tolist() == [0.0, 0.0]
    np.testing.assert_allclose(out[0, :2], oracles.softmax_row([1.0, 2.0]), rtol=0, atol=1e-15)
    assert out[1, 0] == out[1, 1] == 0.5
    assert not T.masked_softmax(Tensor(x), np.zeros(3, dtype=bool)).data.any()
    check_unary(lambda t: T.masked_softmax(t, mask), x)


@settings(max_examples=1000, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 12)), elements=st.floats(-50, 50)),
    st.data(),
)
def test_softmax_rows_sum_to_one(x, data):
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=x.shape[1], max_size=x.shape[1])))
    out = T.masked_softmax(Tensor(x), mask).data
    assert np.isfinite(out).all()
    if mask.any():
        assert np.all(np.abs(out.sum(axis=-1) - 1.0) <= 1e-9)
        assert not out[:, ~mask].any()


def test_sigmoid_is_stable():
    out = T.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
    assert out.tolist() == [0.0, 0.5, 1.0]


def test_conv_matches_loop_oracle():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 6, 8))
    k = rng.normal(size=(3, 2, 3))
    b = rng.normal(size=3)
    out = T.conv2d_valid(Tensor(x), Tensor(k), Tensor(b)).data
    for s in range(2):
        for c in range(3):
            for r in range(5):
                for q in range(6):
                    ref = b[c] + sum(x[s, r + i, q + j] * k[c, i, j] for i in range(2) for j in range(3))
                    assert math.isclose(out[s, r, q, c], ref, rel_tol=1e-12, abs_tol=1e-12)
    check_unary(lambda t: T.conv2d_valid(t, Tensor(k), Tensor(b)), x)
    check_unary(lambda t: T.conv2d_valid(Tensor(x), t, Tensor(b)), k)


def test_conv_relu_mean_skips_zero_rows_exactly():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 20, 7))
    zero = np.zeros(20, dtype=bool)
    zero[5:12] = True
    zero[17:] = True
    x[:, zero] = 0.0
    k = rng.normal(size=(4, 3, 2))
    b = rng.normal(size=4)
    dense = T.mean(T.relu(T.conv2d_valid(Tensor(x), Tensor(k), Tensor(b))), axis=(1, 2)).data
    fast = T.conv_relu_mean(Tensor(x), Tensor(k), Tensor(b), zero).data
    np.testing.assert_allclose(fast, dense, rtol=0, atol=1e-13)
    for s in range(3):
        np.testing.assert_allclose(fast[s], oracles.conv_relu_mean(x[s].tolist(), k.tolist(), b.tolist()), atol=1e-12)
    check_unary(lambda t: T.conv_relu_mean(Tensor(x), t, Tensor(b), zero), k)
    check_unary(lambda t: T.conv_relu_mean(Tensor(x), Tensor(k), t, zero), b)
    check_unary(lambda t: T.conv_relu_mean(t, Tensor(k), Tensor(b)), x)


def test_gather_rows_gradient_is_a_scatter():
    table = Tensor(np.random.default_rng(6).normal(size=(5, 3)), requires_grad=True)
    ids = np.array([[2, 2, 4, 0]])
    mask = np.array([[True, True, True, False]])
    out = T.gather_rows(table, ids, mask)
    assert np.array_equal(out.data[0, :3], table.data[[2, 2, 4]])
    assert not out.data[0, 3].any()
    out.backward(np.ones_like(out.data))
    assert table.grad.tolist() == [[0.0] * 3, [0.0] * 3, [2.0] * 3, [0.0] * 3, [1.0] * 3]


def test_cross_entropy_values():
    assert abs(float(T.binary_cross_entropy(Tensor(np.array([0.5])), np.array([1.0])).data) - math.log(2)) <= 1e-12
    assert abs(float(T.binary_cross_entropy(Tensor(np.array([0.5])), np.array([0.0])).data) - math.log(2)) <= 1e-12
    assert float(T.binary_cross_entropy(Tensor(np.array([1.0])), np.array([1.0])).data) < 1e-11
    p = np.array([0.2, 0.9, 0.6])
    y = np.array([0.0, 1.0, 0.0])
    expected = sum(oracles.bce(pi, yi) for pi, yi in zip(p, y)) / 3
    assert math.isclose(float(T.binary_cross_entropy(Tensor(p), y).data), expected, rel_tol=1e-14)
    check_unary(lambda t: T.binary_cross_entropy(t, y), p)


def test_cross_entropy_rejects_out_of_range():
    with pytest.raises(NumericError):
        T.binary_cross_entropy(Tensor(np.array([1.5])), np.array([1.0]))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.sampled_from([0.0, 1.0]))
def test_cross_entropy_non_negative(p, y):
    assert float(T.binary_cross_entropy(Tensor(np.array([p])), np.array([y])).data) >= 0.0


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_non_finite_values_raise():
    with pytest.raises(NumericError, match="add"):
        T.add(Tensor(np.array([1.0])), np.array([np.inf]))
    with pytest.raises(NumericError, match="mul"):
        T.mul(Tensor(np.array([1e300])), np.array([1e300]))


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_non_finite_gradient_names_parameter():
    w = Tensor(np.array([1.0]), requires_grad=True, name="w")
    out = T.mul(w, np.array([1e200]))
    with pytest.raises(NumericError, match="into w"):
        out.backward(np.array([1e200]))


def test_unused_leaf_gets_no_gradient():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    T.mean(T.mul(a, 2.0), axis=0).backward()
    assert b.grad is None
    assert a.grad.tolist() == [2 / 3] * 3


def test_shared_subexpression_accumulates():
    a = Tensor(np.array([3.0]), requires_grad=True)
    y = T.mul(a, a)
    T.add(y, y).backward(np.ones(1))
    assert a.grad.tolist() == [12.0]
