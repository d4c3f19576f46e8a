"""Layered noisy spiking networks: forward simulation and exact enumeration."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import neuron
from .errors import CapacityError, ParameterError, ShapeError
from .neuron import LifParams, NoiseModel
from .numerics import as_stream, log_softmax, softmax

LOSS_MODES = ("per_step_mean", "mean_logits")
LOSSES = ("cross_entropy", "linear")
MAX_ENUM_UNITS = 24


@dataclass
class LayerSpec:
    weights: np.ndarray
    bias: np.ndarray
    lif: LifParams = field(default_factory=LifParams)
    noise: NoiseModel = field(default_factory=NoiseModel)
    # fixed (untrained) elementwise scaling of the layer input, identity by default
    input_scale: float | np.ndarray = 1.0

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64, ndmin=1)
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"bias {self.bias.shape} does not match weights {self.weights.shape}")
        if not np.isscalar(self.input_scale):
            self.input_scale = np.asarray(self.input_scale, dtype=np.float64)
            if self.input_scale.shape != (self.in_dim,):
                raise ShapeError("input_scale must be a scalar or have length in_dim")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def drive(self, x):
        """Affine map ``W (s * x) + b`` over the trailing axis."""
        return (x * self.input_scale) @ self.weights.T + self.bias


@dataclass
class Readout:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64, ndmin=1)
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("readout bias does not match readout weights")


@dataclass
class Network:
    layers: list[LayerSpec]
    readout: Readout
    loss_mode: str = "per_step_mean"
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ParameterError(f"unknown loss_mode {self.loss_mode!r}")
        if self.loss not in LOSSES:
            raise ParameterError(f"unknown loss {self.loss!r}")
        if not self.layers:
            raise ShapeError("a network needs at least one spiking layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
        if self.readout.weights.shape[1] != self.layers[-1].out_dim:
            raise ShapeError("readout input dim must equal the last layer width")

    @classmethod
    def random(cls, dims, rng, noise=None, lif=None, gain=1.0, bias=0.0, **kwargs):
        """Fully connected net with widths ``dims = [in, h1, ..., hL, n_out]``."""
        rng = as_stream(rng)
        noise = noise if noise is not None else NoiseModel()
        lif = lif if lif is not None else LifParams()
        layers = []
        for d_in, d_out in zip(dims[:-2], dims[1:-1]):
            w = rng.generator.standard_normal((d_out, d_in)) * gain / np.sqrt(d_in)
            layers.append(LayerSpec(w, np.full(d_out, float(bias)), lif, noise))
        d_in, d_out = dims[-2], dims[-1]
        readout = Readout(rng.generator.standard_normal((d_out, d_in)) / np.sqrt(d_in), np.zeros(d_out))
        return cls(layers, readout, **kwargs)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def n_classes(self) -> int:
        return self.readout.weights.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        """Live views of every trainable array, keyed by a stable name."""
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"layers.{i}.weights"] = layer.weights
            params[f"layers.{i}.bias"] = layer.bias
        params["readout.weights"] = self.readout.weights
        params["readout.bias"] = self.readout.bias
        return params

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def with_noise(self, noise: NoiseModel) -> "Network":
        net = self.copy()
        for layer in net.layers:
            layer.noise = noise
        return net


@dataclass
class Trace:
    """Full record of a batched forward pass; arrays are ``(B, T, n)``."""

    x: np.ndarray
    inputs: list
    u_pre: list
    fire_prob: list
    spikes: list
    eps: list | None
    logits: np.ndarray
    mode: str
    labels: np.ndarray | None = None
    losses: np.ndarray | None = None

    @property
    def batch_size(self) -> int:
        return self.x.shape[0]

    @property
    def steps(self) -> int:
        return self.x.shape[1]

    def predictions(self) -> np.ndarray:
        """Class probabilities from time-averaged logits."""
        return softmax(self.logits.mean(axis=1))


def as_batch(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"input must be (T, in) or (B, T, in), got {x.shape}")
    if x.shape[1] < 1:
        raise ShapeError("input sequence needs T >= 1")
    if x.shape[2] != net.in_dim:
        raise ShapeError(f"input dim {x.shape[2]} does not match layer 1 ({net.in_dim})")
    return x


def _labels(labels, batch):
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim == 0:
        y = np.full(batch, int(y))
    if y.shape != (batch,):
        raise ShapeError(f"labels shape {y.shape} does not match batch {batch}")
    return y


def loss_from_logits(net: Network, logits, labels):
    """Per-sample loss for ``(B, T, K)`` logits."""
    _, steps, k = logits.shape
    onehot = np.eye(k)[labels]
    if net.loss_mode == "mean_logits":
        logits = logits.mean(axis=1, keepdims=True)
    if net.loss == "cross_entropy":
        per_step = -(log_softmax(logits) * onehot[:, None, :]).sum(axis=-1)
    else:
        per_step = -(logits * onehot[:, None, :]).sum(axis=-1)
    return per_step.mean(axis=1)


def loss_grad_logits(net: Network, logits, labels):
    """d loss / d logits, same shape as ``logits`` (B, T, K)."""
    _, steps, k = logits.shape
    onehot = np.eye(k)[labels][:, None, :]
    if net.loss_mode == "mean_logits":
        z = np.broadcast_to(logits.mean(axis=1, keepdims=True), logits.shape)
    else:
        z = logits
    if net.loss == "cross_entropy":
        g = softmax(z) - onehot
    else:
        g = np.broadcast_to(-onehot, logits.shape)
    return g / steps


def forward(net: Network, x, mode="sample", rng=None, labels=None, eps=None, forced=None, spike_hook=None):
    """Simulate the network over ``T`` steps.

    ``eps`` reuses stored noise draws (common random numbers); ``forced``
    supplies every spike state instead of sampling it; ``spike_hook(l, t, o)``
    may rewrite a layer's spikes before they reset the membrane and feed the
    next layer.
    """
    if mode not in ("sample", "deterministic"):
        raise ParameterError(f"unknown mode {mode!r}")
    x = as_batch(net, x)
    batch, steps, _ = x.shape
    if forced is not None:
        batch = forced[0].shape[0]
        x = np.broadcast_to(x, (batch,) + x.shape[1:])
    if mode == "sample" and forced is None:
        if eps is None:
            stream = as_stream(rng)
            eps = [layer.noise.sample(stream, (batch, steps, layer.out_dim)) for layer in net.layers]
        else:
            if len(eps) != len(net.layers):
                raise ShapeError("one noise array per layer is required")
            batch = max(batch, eps[0].shape[0])
            x = np.broadcast_to(x, (batch,) + x.shape[1:])
    elif mode == "deterministic":
        eps = None

    n_layers = len(net.layers)
    inputs = [np.empty((batch, steps, ly.in_dim)) for ly in net.layers]
    u_pre = [np.empty((batch, steps, ly.out_dim)) for ly in net.layers]
    probs = [np.empty((batch, steps, ly.out_dim)) for ly in net.layers]
    spikes = [np.empty((batch, steps, ly.out_dim)) for ly in net.layers]
    u = [np.full((batch, ly.out_dim), ly.lif.u_reset) for ly in net.layers]

    for t in range(steps):
        h = x[:, t]
        for l, layer in enumerate(net.layers):
            inputs[l][:, t] = h
            v = neuron.integrate(u[l], layer.drive(h), layer.lif)
            if forced is not None:
                o = np.asarray(forced[l][:, t], dtype=np.float64)
                p = np.asarray(neuron.noise_cdf(layer.noise, v - layer.lif.v_th))
            else:
                o, p = neuron.fire(v, layer.lif, layer.noise, None if eps is None else eps[l][:, t])
            if spike_hook is not None:
                o = spike_hook(l, t, o)
            u_pre[l][:, t], probs[l][:, t], spikes[l][:, t] = v, p, o
            u[l] = neuron.reset(v, o, layer.lif)
            h = o
    logits = spikes[n_layers - 1] @ net.readout.weights.T + net.readout.bias

    trace = Trace(x, inputs, u_pre, probs, spikes, eps, logits, mode)
    if labels is not None:
        trace.labels = _labels(labels, batch)
        trace.losses = loss_from_logits(net, logits, trace.labels)
    return trace


@dataclass
class JointDistribution:
    """Every spike configuration with its probability.

    ``configs[i, j]`` is the state of unit ``units[j] = (t, layer, neuron)``;
    units are ordered time-major, then layer, then neuron.
    """

    units: list
    configs: np.ndarray
    probs: np.ndarray

    def marginal(self, t, layer, m) -> float:
        j = self.units.index((t, layer, m))
        return float(self.probs @ self.configs[:, j])


def spiking_units(net: Network, steps: int):
    return [(t, l, m) for t in range(steps) for l, ly in enumerate(net.layers) for m in range(ly.out_dim)]


def _enumeration(net: Network, x, labels=None):
    x = as_batch(net, x)
    if x.shape[0] != 1:
        raise ShapeError("enumeration takes a single input sequence")
    steps = x.shape[1]
    units = spiking_units(net, steps)
    if len(units) > MAX_ENUM_UNITS:
        raise CapacityError(f"{len(units)} spiking neuron-steps exceed the enumeration guard of {MAX_ENUM_UNITS}")
    n_cfg = 1 << len(units)
    bits = (np.arange(n_cfg)[:, None] >> np.arange(len(units))[::-1]) & 1
    configs = bits.astype(np.float64)
    forced = [np.empty((n_cfg, steps, ly.out_dim)) for ly in net.layers]
    for j, (t, l, m) in enumerate(units):
        forced[l][:, t, m] = configs[:, j]
    trace = forward(net, x, mode="sample", labels=labels, forced=forced)
    probs = np.ones(n_cfg)
    for l in range(len(net.layers)):
        p, o = trace.fire_prob[l], forced[l]
        probs *= np.where(o > 0.5, p, 1.0 - p).reshape(n_cfg, -1).prod(axis=1)
    return JointDistribution(units, configs, probs), trace


def enumerate_joint(net: Network, x) -> JointDistribution:
    """Exact joint distribution of all spike states for one input sequence."""
    return _enumeration(net, x)[0]


def expected_loss(net: Network, x, labels) -> float:
    """Loss averaged over the exact joint spike distribution."""
    label = np.asarray(labels, dtype=np.int64).reshape(-1)
    if label.size != 1:
        raise ShapeError("expected_loss takes the label of a single sequence")
    joint, trace = _enumeration(net, x, labels=int(label[0]))
    return float(joint.probs @ trace.losses)


# -- serialization -----------------------------------------------------------

FORMAT_VERSION = 1


def _noise_dict(noise: NoiseModel):
    return {"family": noise.family, "scale": noise.scale}


def network_to_dict(net: Network) -> dict:
    layers = []
    for layer in net.layers:
        scale = layer.input_scale
        layers.append(
            {
                "in_dim": layer.in_dim,
                "out_dim": layer.out_dim,
                "weights": layer.weights.ravel().tolist(),
                "bias": layer.bias.tolist(),
                "lif": {"tau": layer.lif.tau, "v_th": layer.lif.v_th, "u_reset": layer.lif.u_reset},
                "noise": _noise_dict(layer.noise),
                "input_scale": float(scale) if np.isscalar(scale) else np.asarray(scale).tolist(),
            }
        )
    return {
        "format_version": FORMAT_VERSION,
        "layers": layers,
        "readout": {
            "in_dim": net.readout.weights.shape[1],
            "out_dim": net.readout.weights.shape[0],
            "weights": net.readout.weights.ravel().tolist(),
            "bias": net.readout.bias.tolist(),
        },
        "loss_mode": net.loss_mode,
        "loss": net.loss,
    }


def network_from_dict(doc: dict) -> Network:
    layers = []
    for spec in doc["layers"]:
        w = np.asarray(spec["weights"], dtype=np.float64).reshape(spec["out_dim"], spec["in_dim"])
        noise = NoiseModel(spec["noise"]["family"], float(spec["noise"]["scale"]))
        lif = LifParams(**{k: float(v) for k, v in spec["lif"].items()})
        scale = spec.get("input_scale", 1.0)
        layers.append(LayerSpec(w, spec["bias"], lif, noise, scale if np.isscalar(scale) else np.asarray(scale)))
    ro = doc["readout"]
    readout = Readout(np.asarray(ro["weights"], dtype=np.float64).reshape(ro["out_dim"], ro["in_dim"]), ro["bias"])
    return Network(layers, readout, doc.get("loss_mode", "per_step_mean"), doc.get("loss", "cross_entropy"))
