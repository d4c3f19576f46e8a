"""Gradient estimators for noisy spiking networks, optimizers and training.

Backward passes sweep the unrolled (layer, time) graph in reverse. Wherever
the chain rule needs d o / d u, a pseudo-derivative of ``u - v_th`` is used:
the noise density for NDL and the ERF surrogate for SGL. The reset path
``u * (1 - o) + u_reset * o`` treats ``o`` as a constant.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ParameterError, ShapeError, TrainingError
from .network import Network, Trace, as_batch, expected_loss, forward, loss_grad_logits, spiking_units
from .neuron import noise_pdf
from .numerics import RngStream, as_stream

MAX_FLIP_UNITS = 512


@dataclass
class GradientSet:
    """Gradients keyed like ``Network.parameters()``.

    With ``per_sample=True`` every array carries a leading batch axis.
    ``input`` holds the per-sample d loss_b / d x_b, shape (B, T, in), when
    the backward pass computed it.
    """

    grads: dict
    input: np.ndarray | None = None
    per_sample: bool = False

    def __getitem__(self, key):
        return self.grads[key]

    def keys(self):
        return self.grads.keys()

    def items(self):
        return self.grads.items()

    def mean(self) -> "GradientSet":
        if not self.per_sample:
            return self
        return GradientSet({k: v.mean(axis=0) for k, v in self.grads.items()}, self.input)

    def stderr(self) -> dict:
        if not self.per_sample:
            raise ValueError("standard errors need per-sample gradients")
        return {k: v.std(axis=0, ddof=1) / np.sqrt(v.shape[0]) for k, v in self.grads.items()}

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(v) for v in self.grads.values()])

    @classmethod
    def zeros(cls, net: Network) -> "GradientSet":
        return cls({k: np.zeros_like(v) for k, v in net.parameters().items()})


def sg_erf(x):
    """ERF surrogate, the derivative of (1 + erf(x)) / 2."""
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-x * x) / math.sqrt(math.pi)


def _check(net: Network, trace: Trace):
    if len(trace.spikes) != len(net.layers):
        raise ShapeError("trace layer count does not match network")
    for layer, o in zip(net.layers, trace.spikes):
        if o.shape[2] != layer.out_dim:
            raise ShapeError("trace widths do not match network")
    if trace.logits.shape[2] != net.n_classes:
        raise ShapeError("trace logits do not match readout")


def _reduce(arr, per_sample):
    return arr if per_sample else arr.mean(axis=0)


def _readout_grads(net, trace, dlogits, per_sample):
    o_last = trace.spikes[-1]
    dw = np.einsum("btk,btn->bkn", dlogits, o_last)
    db = dlogits.sum(axis=1)
    return _reduce(dw, per_sample), _reduce(db, per_sample)


def backward(net: Network, trace: Trace, pseudo, per_sample=False, dlogits=None, d_spikes=None) -> GradientSet:
    """Reverse sweep with ``pseudo(layer_index, u_pre - v_th)`` as d o / d u.

    ``dlogits`` defaults to the gradient of the trace's classification loss.
    ``d_spikes`` optionally adds a direct loss gradient on spike states, one
    (B, T, n) array or None per layer.
    """
    _check(net, trace)
    if dlogits is None:
        if trace.labels is None:
            raise ParameterError("trace was recorded without labels")
        dlogits = loss_grad_logits(net, trace.logits, trace.labels)
    batch, steps = trace.batch_size, trace.steps
    grads = {}
    grads["readout.weights"], grads["readout.bias"] = _readout_grads(net, trace, dlogits, per_sample)

    n_layers = len(net.layers)
    surrogate = [pseudo(l, trace.u_pre[l] - ly.lif.v_th) for l, ly in enumerate(net.layers)]
    dw = [np.zeros((batch,) + ly.weights.shape) if per_sample else np.zeros(ly.weights.shape) for ly in net.layers]
    db = [np.zeros((batch, ly.out_dim)) for ly in net.layers]
    carry = [np.zeros((batch, ly.out_dim)) for ly in net.layers]
    d_input = np.zeros_like(trace.x, dtype=np.float64)

    for t in range(steps - 1, -1, -1):
        d_out = dlogits[:, t] @ net.readout.weights
        for l in range(n_layers - 1, -1, -1):
            layer = net.layers[l]
            o = trace.spikes[l][:, t]
            if d_spikes is not None and d_spikes[l] is not None:
                d_out = d_out + d_spikes[l][:, t]
            du = d_out * surrogate[l][:, t] + carry[l] * (1.0 - o)
            carry[l] = layer.lif.tau * du
            x_eff = trace.inputs[l][:, t] * layer.input_scale
            if per_sample:
                dw[l] += du[:, :, None] * x_eff[:, None, :]
            else:
                dw[l] += du.T @ x_eff / batch
            db[l] += du
            d_out = (du @ layer.weights) * layer.input_scale
        d_input[:, t] = d_out

    for l in range(n_layers):
        grads[f"layers.{l}.weights"] = dw[l]
        grads[f"layers.{l}.bias"] = _reduce(db[l], per_sample)
    ordered = {k: grads[k] for k in net.parameters()}
    return GradientSet(ordered, d_input, per_sample)


def ndl_backward(net: Network, trace: Trace, per_sample=False) -> GradientSet:
    """Noise-driven learning: the post-synaptic factor is the noise density."""
    for layer in net.layers:
        if layer.noise.deterministic:
            raise ParameterError("NDL needs a noisy layer; use sgl_backward for deterministic nets")
    return backward(net, trace, lambda l, v: noise_pdf(net.layers[l].noise, v), per_sample)


def sgl_backward(net: Network, trace: Trace, surrogate="erf", per_sample=False) -> GradientSet:
    if surrogate != "erf":
        raise ParameterError(f"unsupported surrogate {surrogate!r}")
    return backward(net, trace, lambda l, v: sg_erf(v), per_sample)


def _flip_hook(layer, t, m):
    def hook(l, s, o):
        if l == layer and s == t:
            o = o.copy()
            o[:, m] = 1.0 - o[:, m]
        return o

    return hook


def _local_marg_chunk(net, x, labels, stream):
    trace = forward(net, x, mode="sample", rng=stream, labels=labels)
    batch, steps = trace.batch_size, trace.steps
    base = trace.losses
    # D[l][b, t, m] = L(o_ltm = 1) - L(o_ltm = 0), downstream noise held fixed
    diff = [np.empty_like(o) for o in trace.spikes]
    for t, l, m in spiking_units(net, steps):
        flipped = forward(net, trace.x, mode="sample", eps=trace.eps, labels=trace.labels,
                          spike_hook=_flip_hook(l, t, m)).losses
        diff[l][:, t, m] = (2.0 * trace.spikes[l][:, t, m] - 1.0) * (base - flipped)

    dlogits = loss_grad_logits(net, trace.logits, trace.labels)
    grads = {}
    grads["readout.weights"], grads["readout.bias"] = _readout_grads(net, trace, dlogits, True)
    for l, layer in enumerate(net.layers):
        pdf = noise_pdf(layer.noise, trace.u_pre[l] - layer.lif.v_th)
        elig_w = np.zeros((batch,) + layer.weights.shape)
        elig_b = np.zeros((batch, layer.out_dim))
        gw = np.zeros_like(elig_w)
        gb = np.zeros_like(elig_b)
        for t in range(steps):
            # d u_t / d theta with the spike history held fixed
            if t:
                keep = layer.lif.tau * (1.0 - trace.spikes[l][:, t - 1])
                elig_w *= keep[:, :, None]
                elig_b *= keep
            x_eff = trace.inputs[l][:, t] * layer.input_scale
            elig_w += x_eff[:, None, :]
            elig_b += 1.0
            coef = pdf[:, t] * diff[l][:, t]
            gw += coef[:, :, None] * elig_w
            gb += coef * elig_b
        grads[f"layers.{l}.weights"] = gw
        grads[f"layers.{l}.bias"] = gb
    return {k: grads[k] for k in net.parameters()}


def local_marg_gradient(net: Network, x, labels, rng, n_samples=1, per_sample=False, chunk=20000) -> GradientSet:
    """Unbiased estimator by exact summation over one spike variable at a time.

    Each sampled forward is followed by one re-simulation per spiking
    neuron-step with that state flipped and all noise draws reused.
    """
    x = as_batch(net, x)
    for layer in net.layers:
        if layer.noise.deterministic:
            raise ParameterError("local marginalization needs noisy layers")
    units = len(spiking_units(net, x.shape[1]))
    if units > MAX_FLIP_UNITS:
        raise CapacityError(f"{units} spiking neuron-steps exceed the flip guard of {MAX_FLIP_UNITS}")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size == 1:
        labels = np.repeat(labels, x.shape[0])
    if labels.shape != (x.shape[0],):
        raise ShapeError("one label per input sequence is required")
    xs = np.repeat(x, n_samples, axis=0)
    ys = np.repeat(labels, n_samples)
    stream = as_stream(rng)
    parts = []
    for k, start in enumerate(range(0, xs.shape[0], chunk)):
        sl = slice(start, start + chunk)
        parts.append(_local_marg_chunk(net, xs[sl], ys[sl], stream.child(k)))
    grads = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
    result = GradientSet(grads, per_sample=True)
    return result if per_sample else result.mean()


def exact_gradient(net: Network, x, labels, h=1e-5) -> GradientSet:
    """Central finite differences of the enumerated expected loss."""
    work = net.copy()
    grads = {}
    for name, arr in work.parameters().items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = expected_loss(work, x, labels)
            arr[idx] = orig - h
            down = expected_loss(work, x, labels)
            arr[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads[name] = g
    return GradientSet(grads)


# -- optimizers --------------------------------------------------------------


def cosine_multiplier(step: int, total: int) -> float:
    if total is None or total <= 0:
        return 1.0
    step = min(max(step, 0), total)
    return 0.5 * (1.0 + math.cos(math.pi * step / total))


@dataclass
class OptimizerState:
    method: str = "adam"
    learning_rate: float = 3e-3
    total_steps: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("sgd", "adam"):
            raise ParameterError(f"unknown optimizer {self.method!r}")

    @property
    def current_rate(self) -> float:
        return self.learning_rate * cosine_multiplier(self.step, self.total_steps)


def _match(params, grads):
    for k, p in params.items():
        if np.shape(grads[k]) != np.shape(p):
            raise ShapeError(f"gradient for {k} has shape {np.shape(grads[k])}, expected {np.shape(p)}")


def sgd_step(params: dict, grads, state: OptimizerState) -> dict:
    _match(params, grads)
    lr = state.current_rate
    state.step += 1
    return {k: p - lr * grads[k] for k, p in params.items()}


def adam_step(params: dict, grads, state: OptimizerState) -> dict:
    _match(params, grads)
    lr = state.current_rate
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    out = {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[k], state.v[k] = m, v
        m_hat = m / (1 - b1**state.step)
        v_hat = v / (1 - b2**state.step)
        out[k] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


def apply_update(net: Network, grads, state: OptimizerState):
    params = net.parameters()
    new = (adam_step if state.method == "adam" else sgd_step)(params, grads, state)
    for k, p in params.items():
        np.copyto(p, new[k])


# -- training ----------------------------------------------------------------


def evaluate(net: Network, x, y, mode, rng=None, batch_size=512):
    """Mean loss and accuracy; predictions use time-averaged logits."""
    losses, correct = [], 0
    for start in range(0, len(y), batch_size):
        sl = slice(start, start + batch_size)
        tr = forward(net, x[sl], mode=mode, rng=rng, labels=y[sl])
        losses.append(tr.losses)
        correct += int((tr.logits.mean(axis=1).argmax(axis=1) == y[sl]).sum())
    return float(np.concatenate(losses).mean()), correct / len(y)


def train(net: Network, dataset, optimizer: OptimizerState, epochs: int, rng, rule="ndl",
          batch_size=64, test_set=None, on_epoch=None):
    """Minibatch training with NDL (sampled forward) or SGL (deterministic).

    ``dataset`` and ``test_set`` expose ``x`` (N, T, in) and ``y`` (N,).
    Returns a trained copy of ``net`` and one metrics dict per epoch and split.
    """
    if rule not in ("ndl", "sgl"):
        raise ParameterError(f"unknown learning rule {rule!r}")
    if len(dataset.y) == 0:
        raise ParameterError("training set is empty")
    if rule == "ndl" and any(ly.noise.deterministic for ly in net.layers):
        raise ParameterError("NDL training needs a noise family other than 'none'")
    mode = "sample" if rule == "ndl" else "deterministic"
    net = net.copy()
    stream = as_stream(rng)
    n = len(dataset.y)
    n_batches = math.ceil(n / batch_size)
    if optimizer.total_steps is None:
        optimizer.total_steps = epochs * n_batches
    metrics = []
    for epoch in range(epochs):
        t0 = time.perf_counter()
        order = stream.child(0, epoch).generator.permutation(n)
        batch_rng = stream.child(1, epoch)
        lr = optimizer.current_rate
        tot_loss, tot_correct = 0.0, 0
        for b in range(n_batches):
            idx = order[b * batch_size:(b + 1) * batch_size]
            tr = forward(net, dataset.x[idx], mode=mode, rng=batch_rng, labels=dataset.y[idx])
            if not np.all(np.isfinite(tr.losses)):
                raise TrainingError(f"non-finite loss in epoch {epoch}", epoch=epoch)
            grads = ndl_backward(net, tr) if rule == "ndl" else sgl_backward(net, tr)
            apply_update(net, grads, optimizer)
            tot_loss += float(tr.losses.sum())
            tot_correct += int((tr.logits.mean(axis=1).argmax(axis=1) == dataset.y[idx]).sum())
        if not all(np.all(np.isfinite(p)) for p in net.parameters().values()):
            raise TrainingError(f"parameters diverged in epoch {epoch}", epoch=epoch)
        wall_ms = (time.perf_counter() - t0) * 1e3
        rows = [dict(epoch=epoch, split="train", loss=tot_loss / n, accuracy=tot_correct / n, lr=lr, wall_ms=wall_ms)]
        if test_set is not None:
            loss, acc = evaluate(net, test_set.x, test_set.y, mode, rng=stream.child(2, epoch))
            rows.append(dict(epoch=epoch, split="test", loss=loss, accuracy=acc, lr=lr, wall_ms=wall_ms))
        metrics.extend(rows)
        if on_epoch is not None:
            for row in rows:
                on_epoch(row)
    return net, metrics
