"""Numerical kernels for the network: products, activations, loss, Adam.

Everything runs in float64. Gradients are written by hand and checked
against finite differences in the test-suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError


@dataclass
class LayerParams:
    """Weight matrix of one layer together with its Adam state."""

    theta: np.ndarray
    adam_m: np.ndarray = field(default=None)
    adam_v: np.ndarray = field(default=None)
    step_count: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.adam_m is None:
            self.adam_m = np.zeros_like(self.theta)
        if self.adam_v is None:
            self.adam_v = np.zeros_like(self.theta)
        if self.adam_m.shape != self.theta.shape or self.adam_v.shape != self.theta.shape:
            raise ValidationError("moment buffers must match the weight shape")
        if self.step_count < 0:
            raise ValidationError("step_count must be nonnegative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.theta.shape

    def copy(self) -> "LayerParams":
        return LayerParams(
            self.theta.copy(), self.adam_m.copy(), self.adam_v.copy(), self.step_count
        )


@dataclass(frozen=True)
class AdamHyper:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stability: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValidationError("beta1 and beta2 must lie in (0, 1)")
        if self.eps_stability <= 0:
            raise ValidationError("eps_stability must be positive")


def glorot_init(d_in: int, d_out: int, seed) -> LayerParams:
    """Uniform Glorot/Xavier initialization on +-sqrt(6 / (d_in + d_out))."""
    if d_in < 1 or d_out < 1:
        raise ValidationError("layer dimensions must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bound = math.sqrt(6.0 / (d_in + d_out))
    return LayerParams(rng.uniform(-bound, bound, size=(d_in, d_out)))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValidationError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sparse_matmul(a, b: np.ndarray) -> np.ndarray:
    """Sparse (or adjacency) times dense; returns a dense ndarray."""
    m = getattr(a, "matrix", a)
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or m.shape[1] != b.shape[0]:
        raise ValidationError(f"cannot multiply {m.shape} by {b.shape}")
    out = m @ b
    return np.asarray(out.toarray() if sp.issparse(out) else out)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    """Derivative of the rectifier with the convention relu'(0) = 0."""
    return (x > 0).astype(np.float64)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, labels, mask) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the nodes in ``mask`` and its gradient.

    ``mask`` may be a boolean vector or an index array. Rows outside the
    mask get zero gradient.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ValidationError("logits must be n x C with C >= 2")
    idx = _as_index(mask, logits.shape[0])
    if idx.size == 0:
        raise ValidationError("cross-entropy mask selects no nodes")
    y = labels[idx]
    logp = log_softmax(logits[idx])
    loss = -float(logp[np.arange(idx.size), y].mean())
    grad = np.zeros_like(logits)
    g = np.exp(logp)
    g[np.arange(idx.size), y] -= 1.0
    grad[idx] = g / idx.size
    return loss, grad


def _as_index(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape != (n,):
            raise ValidationError("boolean mask length must equal the node count")
        return np.flatnonzero(mask)
    return mask.astype(np.int64).ravel()


def adam_step(params: LayerParams, grad: np.ndarray, hyper: AdamHyper) -> LayerParams:
    """One bias-corrected Adam update; returns a new ``LayerParams``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.theta.shape:
        raise ValidationError(f"gradient shape {grad.shape} != weight shape {params.theta.shape}")
    t = params.step_count + 1
    m = hyper.beta1 * params.adam_m + (1.0 - hyper.beta1) * grad
    v = hyper.beta2 * params.adam_v + (1.0 - hyper.beta2) * grad * grad
    m_hat = m / (1.0 - hyper.beta1**t)
    v_hat = v / (1.0 - hyper.beta2**t)
    theta = params.theta - hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.eps_stability)
    return LayerParams(theta, m, v, t)
