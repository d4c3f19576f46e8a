"""Experiment configuration: one flat JSON document per run.

Keys (all optional except ``task``)::

    task                 train | eval | perturb | stability | coding | fit_spikes | grad_check
    seed                 master seed; every artifact records it
    out_dir              artifact directory
    model_path           serialized Network to start from instead of a fresh init
    dims                 layer widths [input, hidden..., classes]
    init_gain, init_bias weight scale and bias of a fresh init
    noise_family         gaussian | logistic | none
    noise_scale          in (0, 2]
    loss_mode            per_step_mean | mean_logits
    rule                 ndl | sgl
    optimizer, lr, epochs, batch_size
    n_classes, input_dim, T, rate_hi, rate_lo, n_train, n_test, jitter
                         synthetic task
    attack_method, attack_intensities, attack_seeds
                         robustness sweep (NSNN and DSNN per seed)
    stability_a1, stability_a2, stability_b2, stability_variants,
    stability_dt, stability_T, stability_paths
    grad_check_fixture, grad_check_samples
    coding_samples, coding_trials
    fit_neurons, fit_T, fit_epochs, fit_lr
    record_wall_ms       add wall-clock columns to metrics.csv (breaks bit-identical reruns)
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError
from ..network import LOSS_MODES
from ..neuron import FAMILIES
from ..perturb import METHODS
from ..stability import VARIANTS
from .data import SyntheticTaskSpec

TASKS = ("train", "eval", "perturb", "stability", "coding", "fit_spikes", "grad_check")


@dataclass
class ExperimentConfig:
    task: str
    seed: int = 0
    out_dir: str = "runs/default"
    model_path: str | None = None
    dims: list = field(default_factory=lambda: [64, 128, 4])
    init_gain: float = 2.0
    init_bias: float = 0.0
    noise_family: str = "gaussian"
    noise_scale: float = 0.3
    loss_mode: str = "per_step_mean"
    rule: str = "ndl"
    optimizer: str = "adam"
    lr: float = 3e-3
    epochs: int = 60
    batch_size: int = 64
    n_classes: int = 4
    input_dim: int = 64
    T: int = 10
    rate_hi: float = 0.4
    rate_lo: float = 0.1
    n_train: int = 800
    n_test: int = 500
    jitter: float = 0.15
    attack_method: str = "spike_flip"
    attack_intensities: list = field(default_factory=lambda: [0.0, 0.01, 0.02, 0.04, 0.1])
    attack_seeds: int = 5
    stability_a1: list = field(default_factory=lambda: [-2.0, -1.0])
    stability_a2: list = field(default_factory=lambda: [0.0, 0.5, 1.0])
    stability_b2: list = field(default_factory=lambda: [0.0, 0.25, 0.5])
    stability_variants: list = field(default_factory=lambda: ["dW", "dt", "dW_literal"])
    stability_dt: float = 1e-3
    stability_T: float = 50.0
    stability_paths: int = 100
    grad_check_fixture: str = "tiny_net"
    grad_check_samples: int = 100000
    coding_samples: int = 500
    coding_trials: int = 8
    fit_neurons: int = 8
    fit_T: int = 50
    fit_epochs: int = 300
    fit_lr: float = 1e-2
    record_wall_ms: bool = False

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.noise_family not in FAMILIES:
            raise ConfigError(f"unknown noise family {self.noise_family!r}")
        if self.noise_family != "none" and not 0 < self.noise_scale <= 2:
            raise ConfigError("noise_scale must lie in (0, 2]")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"unknown loss_mode {self.loss_mode!r}")
        if self.rule not in ("ndl", "sgl"):
            raise ConfigError(f"unknown rule {self.rule!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.attack_method not in METHODS:
            raise ConfigError(f"unknown attack {self.attack_method!r}")
        if any(v not in VARIANTS for v in self.stability_variants):
            raise ConfigError(f"stability variants must be among {VARIANTS}")
        if self.model_path is not None and not Path(self.model_path).is_file():
            raise ConfigError(f"model file {self.model_path} does not exist")
        if len(self.dims) < 3 or self.dims[0] != self.input_dim or self.dims[-1] != self.n_classes:
            raise ConfigError("dims must be [input_dim, hidden..., n_classes]")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        self.task_spec().validate()
        return self

    def task_spec(self) -> SyntheticTaskSpec:
        return SyntheticTaskSpec(self.n_classes, self.input_dim, self.T, self.rate_hi, self.rate_lo,
                                 self.n_train, self.n_test, self.jitter)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of the config minus where its outputs go."""
        doc = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def config_from_dict(doc: dict, **overrides) -> ExperimentConfig:
    doc = dict(doc, **{k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "task" not in doc:
        raise ConfigError("config needs a 'task'")
    try:
        return ExperimentConfig(**doc).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(doc, **overrides)
