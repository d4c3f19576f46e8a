"""Synthetic Poisson-prototype classification task."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..numerics import as_stream


@dataclass
class SyntheticTaskSpec:
    n_classes: int = 4
    input_dim: int = 64
    T: int = 10
    rate_hi: float = 0.8
    rate_lo: float = 0.1
    n_train: int = 800
    n_test: int = 400
    # per-sample probability of flipping each prototype mask bit
    jitter: float = 0.05
    prototype_density: float = 0.5

    def validate(self):
        for name in ("rate_hi", "rate_lo", "jitter", "prototype_density"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be a probability")
        if not self.rate_hi > self.rate_lo:
            raise ConfigError("rate_hi must exceed rate_lo")
        if min(self.n_classes, self.input_dim, self.T) < 1 or self.n_train < 1 or self.n_test < 0:
            raise ConfigError("counts must be positive")
        if self.n_classes > 2 ** self.input_dim:
            raise ConfigError("not enough input neurons for distinct prototypes")


@dataclass
class SpikeDataset:
    x: np.ndarray  # (N, T, input_dim) binary
    y: np.ndarray  # (N,)

    def __len__(self):
        return len(self.y)

    def subset(self, idx):
        return SpikeDataset(self.x[idx], self.y[idx])


def prototypes(spec: SyntheticTaskSpec, rng) -> np.ndarray:
    gen = as_stream(rng).generator
    while True:
        masks = gen.random((spec.n_classes, spec.input_dim)) < spec.prototype_density
        if len({m.tobytes() for m in masks}) == spec.n_classes:
            return masks


def _realize(spec, masks, labels, gen):
    mask = masks[labels]
    if spec.jitter > 0:
        mask = mask ^ (gen.random(mask.shape) < spec.jitter)
    rates = np.where(mask, spec.rate_hi, spec.rate_lo)
    draws = gen.random((len(labels), spec.T, spec.input_dim))
    return (draws < rates[:, None, :]).astype(np.float64)


def generate_task(spec: SyntheticTaskSpec, rng):
    """Train and test splits drawn from the same class prototypes."""
    spec.validate()
    stream = as_stream(rng)
    masks = prototypes(spec, stream.child(0))
    splits = []
    for k, n in enumerate((spec.n_train, spec.n_test)):
        gen = stream.child(k + 1).generator
        labels = np.arange(n) % spec.n_classes
        gen.shuffle(labels)
        splits.append(SpikeDataset(_realize(spec, masks, labels, gen), labels))
    return splits[0], splits[1]
