"""Input-level and spike-state perturbations for robustness evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AttackError, ParameterError
from .learning import evaluate, ndl_backward, sgl_backward
from .network import Network, as_batch, forward
from .numerics import as_stream

METHODS = ("fgsm", "direct_opt", "event_drop", "spike_flip")


@dataclass
class AttackConfig:
    method: str = "fgsm"
    gamma: float = 0.0
    rho: float = 0.0
    beta: float = 0.0
    do_iters: int = 30
    do_lr: float = 0.002

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown attack {self.method!r}")
        if self.gamma < 0:
            raise ParameterError("gamma must be non-negative")
        for name in ("rho", "beta"):
            if not 0 <= getattr(self, name) <= 1:
                raise ParameterError(f"{name} must be a probability")

    @property
    def intensity(self) -> float:
        return {"fgsm": self.gamma, "direct_opt": self.gamma, "event_drop": self.rho, "spike_flip": self.beta}[self.method]


def input_gradient(net: Network, x, y, rng=None, k=8):
    """Per-sample loss and d loss / d x for a network.

    Noisy nets average ``k`` sampled NDL backward passes; deterministic
    nets use one deterministic forward with the ERF surrogate.
    """
    x = as_batch(net, x)
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (x.shape[0],))
    noisy = not any(layer.noise.deterministic for layer in net.layers)
    if not noisy:
        tr = forward(net, x, mode="deterministic", labels=y)
        return tr.losses, sgl_backward(net, tr).input
    batch = x.shape[0]
    tr = forward(net, np.tile(x, (k, 1, 1)), mode="sample", rng=as_stream(rng), labels=np.tile(y, k))
    grad = ndl_backward(net, tr).input.reshape((k, batch) + x.shape[1:]).mean(axis=0)
    return tr.losses.reshape(k, batch).mean(axis=0), grad


def _oracle(model, y, rng, k):
    """Normalize ``model`` to ``f(x) -> (loss per sample, grad)`` on batched x."""
    if isinstance(model, Network):
        return lambda x: input_gradient(model, x, y, rng, k)

    def wrapped(x):
        loss, grad = model(x[0], y)
        return np.atleast_1d(loss), np.asarray(grad, dtype=np.float64)[None]

    return wrapped


def _batched(model, x):
    x = np.asarray(x, dtype=np.float64)
    if isinstance(model, Network):
        return as_batch(model, x), x.ndim == 2
    return x[None], True


def fgsm(model, x, y, gamma, clip=None, rng=None, k=8):
    """``x + gamma * sign(grad_x loss)``; ``model`` is a Network or a callable
    ``(x, y) -> (loss, grad_x)``. ``clip=(lo, hi)`` keeps the data range."""
    if gamma < 0:
        raise ParameterError("gamma must be non-negative")
    xb, squeeze = _batched(model, x)
    _, grad = _oracle(model, y, rng, k)(xb)
    adv = _within(xb, xb + gamma * np.sign(grad), gamma)
    if clip is not None:
        adv = np.clip(adv, *clip)
    return adv[0] if squeeze else adv


def _within(x, adv, gamma):
    """Pull entries where rounding made ``|adv - x|`` exceed gamma back by one ulp."""
    for _ in range(4):
        over = np.abs(adv - x) > gamma
        if not over.any():
            break
        adv = np.where(over, np.nextafter(adv, x), adv)
    return adv


def _project(delta, gamma):
    norms = np.linalg.norm(delta, axis=1, keepdims=True)
    out = np.zeros_like(delta)
    out[:, 0] = gamma  # fixed direction for a zero vector
    nz = norms[:, 0] > 0
    out[nz] = gamma * delta[nz] / norms[nz]
    return out


def _tangent(vec, point):
    norms = np.linalg.norm(point, axis=1, keepdims=True)
    unit = np.divide(point, norms, out=np.zeros_like(point), where=norms > 0)
    return vec - (vec * unit).sum(axis=1, keepdims=True) * unit


def direct_opt(model, x, y, gamma, iters=30, lr=0.002, rng=None, k=8, betas=(0.9, 0.999), eps=1e-8,
               return_history=False):
    """Maximize the loss over perturbations with ``|dx|_2 = gamma`` exactly.

    Riemannian Adam on the sphere: the gradient is projected onto the
    tangent space, the second moment is one scalar per sample, and every
    step is retracted back onto the sphere. ``dx`` starts at zero.
    """
    if not gamma > 0:
        raise ParameterError("direct_opt needs gamma > 0")
    xb, squeeze = _batched(model, x)
    shape = xb.shape
    oracle = _oracle(model, y, rng, k)
    batch = shape[0]
    delta = np.zeros((batch, int(np.prod(shape[1:]))))
    m = np.zeros_like(delta)
    v = np.zeros((batch, 1))
    b1, b2 = betas
    history = []
    for i in range(1, iters + 1):
        loss, grad = oracle(xb + delta.reshape(shape))
        if not np.all(np.isfinite(loss)):
            raise AttackError(f"non-finite loss at iteration {i}")
        history.append(np.asarray(loss, dtype=np.float64))
        r = _tangent(grad.reshape(batch, -1), delta)
        m = b1 * m + (1 - b1) * r
        v = b2 * v + (1 - b2) * (r * r).sum(axis=1, keepdims=True)
        step = lr * (m / (1 - b1**i)) / (np.sqrt(v / (1 - b2**i)) + eps)
        delta = _project(delta + step, gamma)
        m = _tangent(m, delta)
    delta = _project(delta, gamma)
    adv = (xb + delta.reshape(shape))
    adv = adv[0] if squeeze else adv
    if return_history:
        final, _ = oracle(xb + delta.reshape(shape))
        history.append(np.asarray(final, dtype=np.float64))
        return adv, np.array(history)
    return adv


def event_drop(spike_input, rho, rng):
    """Random Drop: zero every event independently with probability ``rho``."""
    if not 0 <= rho <= 1:
        raise ParameterError("rho must be a probability")
    spikes = np.asarray(spike_input, dtype=np.float64)
    keep = as_stream(rng).generator.random(spikes.shape) >= rho
    return spikes * keep


def spike_flip(spikes, beta, rng):
    """Flip every binary state independently with probability ``beta``."""
    if not 0 <= beta <= 1:
        raise ParameterError("beta must be a probability")
    spikes = np.asarray(spikes, dtype=np.float64)
    flip = as_stream(rng).generator.random(spikes.shape) < beta
    return np.where(flip, 1.0 - spikes, spikes)


def spike_flip_hook(beta, rng):
    """``spike_hook`` for ``network.forward`` flipping every hidden state."""
    stream = as_stream(rng)
    return lambda l, t, o: spike_flip(o, beta, stream)


def model_mode(net: Network) -> str:
    return "deterministic" if any(layer.noise.deterministic for layer in net.layers) else "sample"


def attacked_metrics(net: Network, x, y, config: AttackConfig, rng, clip=(0.0, 1.0)):
    """Loss and accuracy of ``net`` on ``(x, y)`` under one attack."""
    stream = as_stream(rng)
    mode = model_mode(net)
    if config.method == "spike_flip":
        tr = forward(net, x, mode=mode, rng=stream.child(0), labels=y,
                     spike_hook=spike_flip_hook(config.beta, stream.child(1)))
        acc = float((tr.logits.mean(axis=1).argmax(axis=1) == y).mean())
        return float(tr.losses.mean()), acc
    if config.method == "event_drop":
        x_adv = event_drop(x, config.rho, stream.child(1))
    elif config.method == "fgsm":
        x_adv = fgsm(net, x, y, config.gamma, clip=clip, rng=stream.child(1))
    else:
        x_adv = direct_opt(net, x, y, config.gamma, config.do_iters, config.do_lr, rng=stream.child(1))
    return evaluate(net, x_adv, y, mode, rng=stream.child(0))
