"""Spike-count variability, prediction stability and PSP-kernel losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, InsufficientDataError, ShapeError
from .network import Network, forward
from .numerics import as_stream


@dataclass
class TrialEnsemble:
    """``counts[trial, neuron]`` spike counts; ``predictions[trial, class]``."""

    counts: np.ndarray
    predictions: np.ndarray | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if self.counts.ndim == 1:
            self.counts = self.counts[:, None]
        if np.any(self.counts < 0) or np.any(self.counts != np.round(self.counts)):
            raise ValueError("spike counts must be non-negative integers")


@dataclass
class SpikeTrainPair:
    predicted: np.ndarray
    recorded: np.ndarray
    psp_tau: float = 2.0

    def __post_init__(self):
        self.predicted = np.atleast_2d(np.asarray(self.predicted, dtype=np.float64))
        self.recorded = np.atleast_2d(np.asarray(self.recorded, dtype=np.float64))
        if self.predicted.shape != self.recorded.shape:
            raise ShapeError(f"predicted {self.predicted.shape} vs recorded {self.recorded.shape}")
        if not self.psp_tau > 1:
            raise ValueError("psp_tau must exceed 1")


def fano_factor(ensemble) -> np.ndarray:
    """Per-neuron Fano factor, unbiased variance over mean count.

    Neurons that never fire get NaN.
    """
    counts = ensemble.counts if isinstance(ensemble, TrialEnsemble) else TrialEnsemble(ensemble).counts
    if counts.shape[0] < 2:
        raise InsufficientDataError("the Fano factor needs at least two trials")
    mean = counts.mean(axis=0)
    var = counts.var(axis=0, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(mean > 0, var / np.where(mean > 0, mean, 1.0), np.nan)


def prediction_similarity(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    np_, nq = np.linalg.norm(p), np.linalg.norm(q)
    if np_ == 0 or nq == 0:
        raise DegenerateError("cosine similarity of a zero vector")
    return float(np.clip(p @ q / (np_ * nq), -1.0, 1.0))


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 3:
        raise ShapeError("pearson_r needs two equal-length vectors of length >= 3")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise DegenerateError("correlation undefined for a constant vector")
    return float(np.clip(dx @ dy / (sx * sy), -1.0, 1.0))


def psp_filter(train, tau_s=2.0) -> np.ndarray:
    """First-order low-pass over the last axis, starting from zero."""
    if not tau_s > 1:
        raise ValueError("tau_s must exceed 1")
    y = np.asarray(train, dtype=np.float64)
    out = np.empty_like(y)
    decay, gain = 1.0 - 1.0 / tau_s, 1.0 / tau_s
    acc = np.zeros(y.shape[:-1])
    for t in range(y.shape[-1]):
        acc = decay * acc + gain * y[..., t]
        out[..., t] = acc
    return out


def psp_mmd_loss(pair: SpikeTrainPair) -> float:
    """(1/T) sum_t sum_{s<=t} |PSP(pred)_s - PSP(rec)_s|^2 over neurons."""
    diff = psp_filter(pair.predicted, pair.psp_tau) - psp_filter(pair.recorded, pair.psp_tau)
    per_step = (diff * diff).sum(axis=0)
    steps = per_step.shape[0]
    # step s appears in the inner sum for every t >= s
    weights = steps - np.arange(steps)
    return float(per_step @ weights / steps)


def psp_mmd_grad(predicted, recorded, tau_s=2.0) -> np.ndarray:
    """Gradient of ``psp_mmd_loss`` with respect to the predicted train.

    Arrays are (..., neurons, T); the loss is summed over leading axes.
    """
    pred = np.asarray(predicted, dtype=np.float64)
    rec = np.asarray(recorded, dtype=np.float64)
    if pred.shape != rec.shape:
        raise ShapeError(f"predicted {pred.shape} vs recorded {rec.shape}")
    diff = psp_filter(pred, tau_s) - psp_filter(rec, tau_s)
    steps = diff.shape[-1]
    outer = 2.0 * diff * (steps - np.arange(steps)) / steps
    # adjoint of the low-pass filter runs backwards in time
    decay, gain = 1.0 - 1.0 / tau_s, 1.0 / tau_s
    out = np.empty_like(outer)
    acc = np.zeros(outer.shape[:-1])
    for t in range(steps - 1, -1, -1):
        acc = decay * acc + outer[..., t]
        out[..., t] = gain * acc
    return out


def bootstrap_ci(x, y, stat=pearson_r, n_boot=2000, level=0.95, rng=0):
    """Percentile bootstrap interval for a paired statistic."""
    x, y = np.asarray(x), np.asarray(y)
    gen = as_stream(rng).generator
    vals = []
    for _ in range(n_boot):
        idx = gen.integers(0, len(x), len(x))
        try:
            vals.append(stat(x[idx], y[idx]))
        except DegenerateError:
            continue
    lo, hi = np.percentile(vals, [50 * (1 - level), 50 * (1 + level)])
    return float(lo), float(hi)


@dataclass
class CodingReport:
    mean_fano: np.ndarray
    mean_cosine: np.ndarray
    pearson_r: float | None
    ci: tuple | None
    n_trials: int
    degenerate: bool = False
    prediction_space: str = "softmax"


def coding_report(net: Network, x, n_trials, rng, n_boot=2000) -> CodingReport:
    """Trial-to-trial variability of the last spiking layer versus prediction
    stability, one point per input sample.

    Predictions are softmax probabilities of time-averaged logits.
    """
    if n_trials < 2:
        raise InsufficientDataError("coding_report needs at least two trials")
    x = np.asarray(x, dtype=np.float64)
    stream = as_stream(rng)
    n = x.shape[0]
    mode = "deterministic" if any(ly.noise.deterministic for ly in net.layers) else "sample"
    counts, preds = [], []
    for k in range(n_trials):
        tr = forward(net, x, mode=mode, rng=stream.child(k))
        counts.append(tr.spikes[-1].sum(axis=1))
        preds.append(tr.predictions())
    counts = np.stack(counts, axis=1)  # (n, trials, neurons)
    preds = np.stack(preds, axis=1)
    fano = np.empty(n)
    cosine = np.empty(n)
    iu = np.triu_indices(n_trials, 1)
    for i in range(n):
        ff = fano_factor(TrialEnsemble(counts[i]))
        fano[i] = np.nanmean(ff) if np.any(np.isfinite(ff)) else 0.0
        unit = preds[i] / np.linalg.norm(preds[i], axis=1, keepdims=True)
        cosine[i] = (unit @ unit.T)[iu].mean()
    try:
        r = pearson_r(fano, cosine)
    except DegenerateError:
        return CodingReport(fano, cosine, None, None, n_trials, degenerate=True)
    ci = bootstrap_ci(fano, cosine, n_boot=n_boot, rng=stream.child(n_trials))
    return CodingReport(fano, cosine, r, ci, n_trials)
