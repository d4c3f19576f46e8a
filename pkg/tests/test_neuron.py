import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsnn.errors import ParameterError, ShapeError
from nsnn.neuron import LifParams, NoiseModel, noise_cdf, noise_pdf, step
from nsnn.numerics import RngStream

G3 = NoiseModel("gaussian", 0.3)


def test_cdf_examples():
    assert noise_cdf(G3, 0.0) == 0.5
    assert noise_cdf(G3, 0.3) == pytest.approx(0.8413447460685429, abs=1e-12)
    none = NoiseModel("none")
    assert noise_cdf(none, 0.1) == 1 and noise_cdf(none, -0.1) == 0 and noise_cdf(none, 0.0) == 1
    assert noise_cdf(NoiseModel("logistic", 0.2), 0.0) == 0.5


def test_cdf_rejects_non_finite():
    with pytest.raises(ParameterError):
        noise_cdf(G3, np.nan)


def test_pdf_examples():
    assert noise_pdf(NoiseModel("gaussian", 1 / math.sqrt(2)), 0.0) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-14)
    assert noise_pdf(G3, 0.0) == pytest.approx(1 / (0.3 * math.sqrt(2 * math.pi)), rel=1e-14)
    with pytest.raises(ParameterError):
        noise_pdf(NoiseModel("none"), 0.0)


def test_pdf_flushes_far_tail():
    assert noise_pdf(NoiseModel("gaussian", 0.01), 1.0) == 0.0


@given(st.sampled_from(["gaussian", "logistic"]), st.floats(0.05, 2.0), st.floats(-3, 3))
def test_pdf_symmetric_and_matches_cdf_slope(family, scale, z):
    model = NoiseModel(family, scale)
    x = z * scale
    assert noise_pdf(model, x) == pytest.approx(noise_pdf(model, -x), rel=1e-12, abs=1e-300)
    h = 1e-5
    fd = (noise_cdf(model, x + h) - noise_cdf(model, x - h)) / (2 * h)
    assert abs(fd - noise_pdf(model, x)) < 1e-6


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
def test_fire_prob_monotone_in_drive(u, drive, bump):
    p1 = step(np.array([u]), np.array([drive]), LifParams(), G3, "deterministic")[2]
    p2 = step(np.array([u]), np.array([drive + bump]), LifParams(), G3, "deterministic")[2]
    assert p2[0] >= p1[0]


def test_step_deterministic_examples():
    u, o, _ = step(np.array([0.4]), np.array([0.5]), LifParams(), G3, "deterministic")
    assert u[0] == pytest.approx(0.7) and o[0] == 0
    u, o, _ = step(np.array([0.4]), np.array([0.9]), LifParams(), G3, "deterministic")
    assert o[0] == 1 and u[0] == 0.0


def test_reset_is_exact():
    lif = LifParams(u_reset=-0.25)
    u, o, _ = step(np.full(1000, 0.3), np.linspace(0, 3, 1000), lif, G3, "sample", RngStream(0))
    assert np.all(u[o == 1] == -0.25)


def test_sample_rate_at_threshold():
    n = 10**5
    _, o, p = step(np.zeros(n), np.ones(n), LifParams(), G3, "sample", RngStream(11))
    assert np.all(p == 0.5)
    assert abs(o.mean() - 0.5) < 0.005


def test_step_shape_mismatch():
    with pytest.raises(ShapeError):
        step(np.zeros(3), np.zeros(2), LifParams(), G3, "deterministic")


def test_invalid_parameters():
    with pytest.raises(ParameterError):
        NoiseModel("cauchy", 1.0)
    with pytest.raises(ParameterError):
        NoiseModel("gaussian", 0.0)
    with pytest.raises(ParameterError):
        LifParams(tau=1.5)


def test_heaviside_limit_single_population():
    rng = RngStream(2)
    gen = np.random.default_rng(0)
    margin = gen.uniform(0.05, 1.0, 10**5) * gen.choice([-1, 1], 10**5)
    drive = 1.0 + margin
    _, det, _ = step(np.zeros_like(drive), drive, LifParams(), NoiseModel("gaussian", 1e-4), "deterministic")
    _, smp, _ = step(np.zeros_like(drive), drive, LifParams(), NoiseModel("gaussian", 1e-4), "sample", rng)
    assert np.array_equal(det, smp)
