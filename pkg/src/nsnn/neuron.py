"""Membrane noise models and the (Noisy) LIF state transition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr

from .errors import ParameterError, ShapeError

FAMILIES = ("gaussian", "logistic", "none")
PDF_FLUSH = 1e-300


@dataclass(frozen=True)
class NoiseModel:
    """Symmetric zero-mean noise. ``scale`` is the std for gaussian and the
    scale parameter for logistic; it is ignored for ``none``."""

    family: str = "gaussian"
    scale: float = 0.3

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown noise family {self.family!r}")
        if self.family != "none" and not (np.isfinite(self.scale) and self.scale > 0):
            raise ParameterError(f"noise scale must be positive, got {self.scale}")

    @property
    def deterministic(self) -> bool:
        return self.family == "none"

    def sample(self, rng, size):
        if self.family == "none":
            return np.zeros(size)
        if self.family == "gaussian":
            return self.scale * rng.generator.standard_normal(size)
        return rng.generator.logistic(0.0, self.scale, size)


@dataclass(frozen=True)
class LifParams:
    tau: float = 0.5
    v_th: float = 1.0
    u_reset: float = 0.0

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ParameterError(f"tau must lie in (0, 1), got {self.tau}")


def _finite(x):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ParameterError("noise_cdf/noise_pdf argument must be finite")
    return x


def heaviside(x):
    # tie rule: H(0) = 1
    return (np.asarray(x) >= 0).astype(np.float64)


def noise_cdf(model: NoiseModel, x):
    """P[eps < x]; for the ``none`` family this is the Heaviside step."""
    x = _finite(x)
    if model.family == "gaussian":
        out = ndtr(x / model.scale)
    elif model.family == "logistic":
        out = expit(x / model.scale)
    else:
        out = heaviside(x)
    return out if out.ndim else float(out)


def noise_pdf(model: NoiseModel, x):
    x = _finite(x)
    if model.family == "gaussian":
        z = x / model.scale
        out = np.exp(-0.5 * z * z) / (model.scale * np.sqrt(2 * np.pi))
    elif model.family == "logistic":
        s = expit(x / model.scale)
        out = s * (1 - s) / model.scale
    else:
        raise ParameterError("deterministic neurons have no noise density")
    out = np.where(out < PDF_FLUSH, 0.0, out)
    return out if out.ndim else float(out)


def integrate(u_prev, drive, params: LifParams):
    """Noise-free sub-threshold update ``tau * u_prev + drive``."""
    return params.tau * u_prev + drive


def fire(u_pre, params: LifParams, noise: NoiseModel, eps=None):
    """Threshold the membrane. Returns ``(spikes, fire_prob)``.

    With ``eps`` given, the neuron fires iff ``u_pre + eps >= v_th``, which is
    a Bernoulli draw with probability ``noise_cdf(u_pre - v_th)``. With
    ``eps=None`` the comparison is noise-free (deterministic mode).
    """
    v = u_pre - params.v_th
    prob = np.asarray(noise_cdf(noise, v))
    if eps is None:
        return heaviside(v), prob
    return heaviside(v + eps), prob


def reset(u_pre, spikes, params: LifParams):
    return u_pre * (1.0 - spikes) + params.u_reset * spikes


def step(u, drive, params: LifParams, noise: NoiseModel, mode="sample", rng=None):
    """One Noisy-LIF timestep for a population.

    Returns ``(new_u, spikes, fire_prob)``. ``u`` carries the noise-free
    membrane; the noise only enters the threshold comparison.
    """
    u = np.asarray(u, dtype=np.float64)
    drive = np.asarray(drive, dtype=np.float64)
    if u.shape != drive.shape:
        raise ShapeError(f"state shape {u.shape} != drive shape {drive.shape}")
    u_pre = integrate(u, drive, params)
    if mode == "sample":
        if rng is None:
            raise ParameterError("sample mode needs an RngStream")
        eps = noise.sample(rng, u_pre.shape)
    elif mode == "deterministic":
        eps = None
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    spikes, prob = fire(u_pre, params, noise, eps)
    return reset(u_pre, spikes, params), spikes, prob
