"""Euler-Maruyama lab for the drift-diffusion membrane system and its
perturbation (error) dynamics.

Three readings of the error equation are available via ``variant``:

``"dt"``
    The error equation exactly as printed, ``d eps = (df + dg) dt`` with
    ``dg = b2 * df`` taken as a vector. Deterministic given ``eps0``.
``"dW_literal"``
    The literal diffusion ``g(u) = a2 I + b2 diag(f(u))`` applied to both
    ``u`` and ``u + eps`` against one shared vector Wiener path, so
    ``d eps = df dt + b2 diag(df) dW``. The additive part cancels.
``"dW"``
    Diffusion acting on the error itself, ``d eps = df dt + (a2 + b2) eps dW``
    with a scalar Wiener process shared by both trajectories. This is the
    error diffusion whose Frobenius norm sits at the upper edge of the band
    ``a2 |eps| <= |dg|_F <= (a2 + b2) |eps|`` required by the bounds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateError, DivergenceError, ParameterError
from .numerics import as_stream

VARIANTS = ("dt", "dW", "dW_literal")


@dataclass
class SdeSystem:
    a1: float
    a2: float = 0.0
    b2: float = 0.0
    dim: int = 1
    B1: np.ndarray | None = None
    input: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        if self.a2 < 0 or self.b2 < 0:
            raise ParameterError("a2 and b2 must be non-negative")
        self.B1 = np.eye(self.dim) if self.B1 is None else np.asarray(self.B1, dtype=np.float64)
        if self.B1.shape != (self.dim, self.dim):
            raise ParameterError("B1 must be square of size dim")

    def drift(self, u, t):
        out = self.a1 * u
        if self.input is not None:
            out = out + self.B1 @ np.asarray(self.input(t), dtype=np.float64)
        return out

    @classmethod
    def from_lif(cls, tau_m, sigma, dim=1, **kwargs):
        """Sub-threshold Noisy-LIF layer: a1 = -1/tau_m, a2 = sigma, b2 = 0."""
        return cls(a1=-1.0 / tau_m, a2=sigma, b2=0.0, dim=dim, **kwargs)


@dataclass
class ErrorPath:
    times: np.ndarray
    error_norms: np.ndarray
    initial_error: np.ndarray
    variant: str = "dt"
    meta: dict = field(default_factory=dict)


def simulate_ensemble(sys: SdeSystem, u0, eps0, dt, steps, rng, n_paths=1, variant="dt",
                      record_every=1, increments=None):
    """Simulate ``n_paths`` independent (u, u + eps) pairs.

    ``increments`` optionally supplies the Wiener increments, shape
    ``(steps, n_paths, k)`` with ``k = dim`` (``dW_literal``/``dt``) or ``1``
    (``dW``); used to couple runs at different step sizes.
    """
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}")
    if not dt > 0 or steps < 1:
        raise ParameterError("need dt > 0 and steps >= 1")
    dim = sys.dim
    u = np.broadcast_to(np.asarray(u0, dtype=np.float64), (n_paths, dim)).copy()
    eps0 = np.broadcast_to(np.asarray(eps0, dtype=np.float64), (dim,)).copy()
    eps = np.broadcast_to(eps0, (n_paths, dim)).copy()
    stream = None if increments is not None else as_stream(rng)
    sq = np.sqrt(dt)
    k = 1 if variant == "dW" else dim

    n_rec = steps // record_every + 1
    times = np.arange(n_rec) * dt * record_every
    norms = np.empty((n_paths, n_rec))
    norms[:, 0] = np.linalg.norm(eps, axis=1)
    # blow-ups surface as DivergenceError below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(steps):
            t = i * dt
            dw = increments[i] if increments is not None else sq * stream.generator.standard_normal((n_paths, k))
            f = sys.drift(u, t)
            if variant == "dW":
                d_eps = sys.a1 * eps * dt + (sys.a2 + sys.b2) * eps * dw
                u_next = u + f * dt + sys.a2 * dw
            else:
                g = sys.a2 + sys.b2 * f
                u_next = u + f * dt + g * dw
                df = sys.a1 * eps
                if variant == "dt":
                    d_eps = (1.0 + sys.b2) * df * dt
                else:
                    # f(u + eps) - f(u) in closed form; subtracting the two
                    # trajectories loses eps to cancellation once |eps| << |u|
                    d_eps = df * dt + sys.b2 * df * dw
            u = u_next
            eps = eps + d_eps
            if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(u))):
                raise DivergenceError(f"state blew up at step {i + 1}", step=i + 1)
            if (i + 1) % record_every == 0:
                norms[:, (i + 1) // record_every] = np.linalg.norm(eps, axis=1)
    meta = dict(a1=sys.a1, a2=sys.a2, b2=sys.b2, dt=dt, steps=steps)
    return [ErrorPath(times, norms[p], eps0, variant, meta) for p in range(n_paths)]


def simulate_pair(sys: SdeSystem, u0, eps0, dt, steps, rng, variant="dt", record_every=1) -> ErrorPath:
    return simulate_ensemble(sys, u0, eps0, dt, steps, rng, 1, variant, record_every)[0]


def estimate_lyapunov(paths, burn_in_fraction=0.2):
    """Ensemble mean and standard error of per-path growth rates
    ``(log|eps_T| - log|eps_burn|) / (T - t_burn)``."""
    if len(paths) < 2:
        raise DegenerateError("need at least two paths")
    t_end = paths[0].times[-1]
    rates = []
    for path in paths:
        if path.times[-1] != t_end:
            raise DegenerateError("paths must share the final time")
        k = int(np.searchsorted(path.times, burn_in_fraction * t_end))
        k = min(k, len(path.times) - 2)
        start, end = path.error_norms[k], path.error_norms[-1]
        if start <= 0 or end <= 0:
            raise DegenerateError("error norm hit zero; the exponent is undefined")
        rates.append((np.log(end) - np.log(start)) / (t_end - path.times[k]))
    rates = np.asarray(rates)
    return float(rates.mean()), float(rates.std(ddof=1) / np.sqrt(len(rates)))


def theorem1_bounds(a1, a2, b2):
    """Lower and upper bounds on the sample Lyapunov exponent."""
    if a2 < 0 or b2 < 0:
        raise ParameterError("a2 and b2 must be non-negative")
    base = a1 - 0.5 * a2 * a2
    return base - b2 * b2 - 2 * a2 * b2, base + 0.5 * b2 * b2 + a2 * b2


def sweep(a1_grid, a2_grid, b2_grid, variants, rng, dt=1e-3, horizon=50.0, n_paths=100, dim=1,
          burn_in_fraction=0.2, record_every=10):
    """Bounds and estimated exponents over a parameter grid; one row per point."""
    stream = as_stream(rng)
    steps = int(round(horizon / dt))
    rows = []
    for i, a1 in enumerate(a1_grid):
        for j, a2 in enumerate(a2_grid):
            for k, b2 in enumerate(b2_grid):
                lb, ub = theorem1_bounds(a1, a2, b2)
                for v, variant in enumerate(variants):
                    sys = SdeSystem(a1, a2, b2, dim)
                    eps0 = np.full(dim, 1.0 / np.sqrt(dim))
                    paths = simulate_ensemble(sys, np.zeros(dim), eps0, dt, steps, stream.child(i, j, k, v),
                                              n_paths, variant, record_every)
                    le, se = estimate_lyapunov(paths, burn_in_fraction)
                    rows.append(dict(a1=a1, a2=a2, b2=b2, variant=variant, LB=lb, UB=ub, LE_mean=le,
                                     LE_stderr=se, dt=dt, T=horizon, n_paths=n_paths))
    return rows
