import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsnn.errors import ParameterError, ShapeError
from nsnn.numerics import RngStream, matmul, sample_gaussian, sample_uniform, softmax_cross_entropy


def test_matmul_examples():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), m), m)
    assert matmul([[1, 0]], [[5], [7]]).tolist() == [[5]]
    assert matmul([[1, 1]], [[2], [3]]).tolist() == [[5]]


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_matmul_associative(seed, p, q, r, s):
    g = np.random.default_rng(seed)
    a, b, c = g.normal(size=(p, q)), g.normal(size=(q, r)), g.normal(size=(r, s))
    lhs, rhs = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_cross_entropy_examples():
    assert softmax_cross_entropy(np.zeros(4), 0)[0] == pytest.approx(math.log(4), abs=1e-12)
    assert softmax_cross_entropy(np.array([100.0, 0.0]), 0)[0] == pytest.approx(0.0, abs=1e-40)
    assert softmax_cross_entropy(np.array([1.0, 2.0]), 1)[0] == pytest.approx(math.log1p(math.exp(-1)), rel=1e-12)


def test_cross_entropy_empty():
    with pytest.raises(ShapeError):
        softmax_cross_entropy(np.zeros(0), 0)


@given(arrays(np.float64, st.integers(2, 6), elements=st.floats(-3, 3)), st.data())
def test_cross_entropy_gradient_matches_finite_differences(logits, data):
    target = data.draw(st.integers(0, len(logits) - 1))
    _, grad = softmax_cross_entropy(logits, target)
    assert abs(grad.sum()) < 1e-12
    h = 1e-6
    for i in range(len(logits)):
        e = np.zeros_like(logits)
        e[i] = h
        fd = (softmax_cross_entropy(logits + e, target)[0] - softmax_cross_entropy(logits - e, target)[0]) / (2 * h)
        assert abs(fd - grad[i]) < 1e-6


def test_gaussian_zero_sigma_and_negative():
    assert np.all(sample_gaussian(RngStream(1), 0.0, 100) == 0)
    with pytest.raises(ParameterError):
        sample_gaussian(RngStream(1), -0.1)


def test_gaussian_mean():
    draws = sample_gaussian(RngStream(7), 1.0, 10**6)
    assert abs(draws.mean()) < 0.004
    assert draws.std() == pytest.approx(1.0, abs=0.004)


def test_uniform_range():
    u = sample_uniform(RngStream(3), 10**5)
    assert u.min() >= 0 and u.max() < 1


@settings(max_examples=25)
@given(st.integers(0, 2**63), st.integers(0, 2**63))
def test_streams_replay(seed, sid):
    a = RngStream(seed, sid).generator.random(16)
    b = RngStream(seed, sid).generator.random(16)
    assert np.array_equal(a, b)


def test_distinct_streams_decorrelated():
    a = RngStream(5, 0).generator.standard_normal(10**5)
    b = RngStream(5, 1).generator.standard_normal(10**5)
    c = RngStream(5).child(0, 1).generator.standard_normal(10**5)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.015
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.015
    assert not np.array_equal(RngStream(5).child(0, 1).generator.random(4), RngStream(5).child(1, 0).generator.random(4))
