import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsnn.analysis import (SpikeTrainPair, TrialEnsemble, bootstrap_ci, coding_report, fano_factor, pearson_r,
                           prediction_similarity, psp_filter, psp_mmd_grad, psp_mmd_loss)
from nsnn.errors import DegenerateError, InsufficientDataError, ShapeError
from nsnn.network import Network
from nsnn.neuron import NoiseModel
from nsnn.numerics import RngStream


def test_fano_examples():
    assert fano_factor([3, 3, 3])[0] == 0
    assert fano_factor([2, 4])[0] == pytest.approx(2 / 3, abs=1e-12)
    assert np.isnan(fano_factor([0, 0, 0])[0])
    with pytest.raises(InsufficientDataError):
        fano_factor([4])


def test_fano_poisson():
    counts = np.random.default_rng(0).poisson(5.0, 10**5)
    assert fano_factor(counts)[0] == pytest.approx(1.0, abs=0.02)


@given(st.lists(st.integers(0, 20), min_size=2, max_size=12), st.randoms())
def test_fano_permutation_invariant(counts, rnd):
    shuffled = counts[:]
    rnd.shuffle(shuffled)
    assert np.allclose(fano_factor(counts), fano_factor(shuffled), equal_nan=True)


def test_ensemble_rejects_fractional_counts():
    with pytest.raises(ValueError):
        TrialEnsemble([1.5, 2.0])


def test_similarity_examples():
    assert prediction_similarity([0.2, 0.8], [0.2, 0.8]) == pytest.approx(1.0)
    assert prediction_similarity([1, 0], [0, 1]) == 0
    assert prediction_similarity([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    with pytest.raises(DegenerateError):
        prediction_similarity([0, 0], [1, 0])


def test_pearson_examples():
    x = np.array([1.0, 2.0, 3.0, 5.0])
    assert pearson_r(x, 2 * x + 1) == pytest.approx(1.0)
    assert pearson_r(x, -x) == pytest.approx(-1.0)
    assert pearson_r([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(DegenerateError):
        pearson_r([1, 1, 1], [1, 2, 3])
    with pytest.raises(ShapeError):
        pearson_r([1, 2], [1, 2])


@given(st.integers(0, 2**31), st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_affine_invariance(seed, a, b):
    g = np.random.default_rng(seed)
    x, y = g.normal(size=20), g.normal(size=20)
    r = pearson_r(x, y)
    assert pearson_r(a * x + b, y) == pytest.approx(r, abs=1e-10)
    assert pearson_r(-x, y) == pytest.approx(-r, abs=1e-10)


def test_psp_examples():
    assert np.all(psp_filter(np.zeros(5)) == 0)
    assert np.allclose(psp_filter([1, 0, 0]), [0.5, 0.25, 0.125], atol=1e-12, rtol=0)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.integers(1, 64), st.floats(1.1, 10))
def test_psp_closed_form(seed, steps, tau):
    y = (np.random.default_rng(seed).random(steps) < 0.3).astype(float)
    decay = 1 - 1 / tau
    closed = [sum(decay ** (t - k) * y[k] for k in range(t + 1)) / tau for t in range(steps)]
    assert np.allclose(psp_filter(y, tau), closed, atol=1e-12, rtol=0)


def test_psp_mmd_examples():
    assert psp_mmd_loss(SpikeTrainPair([[0, 0]], [[1, 0]])) == pytest.approx(0.28125, abs=1e-12)
    a = np.array([[1, 0, 1, 1]])
    assert psp_mmd_loss(SpikeTrainPair(a, a)) == 0
    with pytest.raises(ShapeError):
        SpikeTrainPair(np.zeros((2, 3)), np.zeros((3, 2)))


def test_psp_mmd_nonnegative_and_symmetric():
    g = np.random.default_rng(0)
    for _ in range(1000):
        a = (g.random((3, 8)) < 0.4).astype(float)
        b = (g.random((3, 8)) < 0.4).astype(float)
        loss = psp_mmd_loss(SpikeTrainPair(a, b))
        assert loss >= 0
        assert loss == pytest.approx(psp_mmd_loss(SpikeTrainPair(b, a)), abs=1e-14)


def test_psp_mmd_grad_matches_finite_differences():
    g = np.random.default_rng(1)
    a, b = g.random((2, 6)), (g.random((2, 6)) < 0.5).astype(float)
    grad = psp_mmd_grad(a, b)
    h = 1e-6
    for idx in np.ndindex(a.shape):
        e = np.zeros_like(a)
        e[idx] = h
        fd = (psp_mmd_loss(SpikeTrainPair(a + e, b)) - psp_mmd_loss(SpikeTrainPair(a - e, b))) / (2 * h)
        assert abs(fd - grad[idx]) < 1e-8


def test_bootstrap_ci_brackets_the_estimate():
    g = np.random.default_rng(0)
    x = g.normal(size=300)
    y = -0.5 * x + g.normal(size=300)
    lo, hi = bootstrap_ci(x, y, n_boot=500, rng=1)
    assert lo < pearson_r(x, y) < hi < 0


def test_coding_report_deterministic_net_is_degenerate():
    net = Network.random([4, 6, 3], RngStream(0), noise=NoiseModel("none"), gain=2.0)
    x = (np.random.default_rng(0).random((10, 5, 4)) < 0.5).astype(float)
    rep = coding_report(net, x, 4, RngStream(1))
    assert rep.degenerate and rep.pearson_r is None
    assert np.all(rep.mean_fano == 0) and np.allclose(rep.mean_cosine, 1)


def test_coding_report_untrained_smoke():
    net = Network.random([4, 6, 3], RngStream(0), gain=2.0)
    x = (np.random.default_rng(0).random((30, 5, 4)) < 0.5).astype(float)
    rep = coding_report(net, x, 4, RngStream(1), n_boot=100)
    assert rep.mean_fano.shape == (30,) and np.all(rep.mean_cosine <= 1 + 1e-12)
    with pytest.raises(InsufficientDataError):
        coding_report(net, x, 1, RngStream(1))
