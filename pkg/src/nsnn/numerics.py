"""Dense linear algebra helpers, losses and reproducible random streams.

Everything is float64 numpy. Random streams are Philox counter-based
generators keyed by ``(seed, stream_id)`` so that a child stream can be
handed to any worker and replayed independently of scheduling order.
"""
from __future__ import annotations

import hashlib

import numpy as np

from .errors import ParameterError, ShapeError

_MASK64 = (1 << 64) - 1


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits, target_class):
    """Cross-entropy of ``softmax(logits)`` against an integer class.

    Works on a single vector or a batch ``(..., K)`` with integer targets of
    shape ``(...)``. Returns ``(loss, grad_logits)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 0 or logits.shape[-1] == 0:
        raise ShapeError("softmax_cross_entropy needs a non-empty logit vector")
    target = np.asarray(target_class, dtype=np.int64)
    if target.shape != logits.shape[:-1]:
        raise ShapeError(f"target shape {target.shape} does not match logits {logits.shape}")
    k = logits.shape[-1]
    if np.any(target < 0) or np.any(target >= k):
        raise ShapeError(f"target class out of range for {k} logits")
    logp = log_softmax(logits)
    onehot = np.eye(k)[target]
    loss = -(logp * onehot).sum(axis=-1)
    grad = np.exp(logp) - onehot
    if logits.ndim == 1:
        return float(loss), grad
    return loss, grad


def _mix64(*words):
    h = hashlib.blake2b(digest_size=8)
    for w in words:
        h.update(int(w & _MASK64).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    ``counter`` is the Philox block counter the stream starts at; two streams
    constructed with the same triple produce identical sequences.
    """

    def __init__(self, seed: int, stream_id: int = 0, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.counter = int(counter) & _MASK64
        bitgen = np.random.Philox(key=[self.seed, self.stream_id], counter=[self.counter, 0, 0, 0])
        self.generator = np.random.Generator(bitgen)

    def child(self, *path: int) -> "RngStream":
        """Independent sub-stream, e.g. ``rng.child(worker, population, block)``."""
        return RngStream(self.seed, _mix64(self.stream_id, len(path), *path))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        raise ParameterError("a random stream is required in sample mode")
    return RngStream(int(rng))


def sample_gaussian(rng: RngStream, sigma: float, size=None):
    if not sigma >= 0:
        raise ParameterError(f"sigma must be non-negative, got {sigma}")
    draws = rng.generator.standard_normal(size)
    return draws * sigma if size is not None else float(draws) * sigma


def sample_uniform(rng: RngStream, size=None):
    return rng.generator.random(size)
