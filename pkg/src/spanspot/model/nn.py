"""Numerical building blocks with explicit backward passes.

All math runs in float64. Forward functions return whatever the matching
backward needs as an opaque cache tuple. Conventions: arrays are
batch-leading, feature-last; layer norm acts over the last axis.
"""

from __future__ import annotations

import math

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715
LAYER_NORM_EPS = 1e-5


def gelu(x: np.ndarray) -> np.ndarray:
    """tanh-approximation GELU."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    """Exact derivative of the tanh-approximation GELU."""
    x2 = x * x
    t = np.tanh(_GELU_C * (x + _GELU_A * x * x2))
    sech2 = 1.0 - t * t
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * _GELU_C * (1.0 + 3.0 * _GELU_A * x2)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = (x - mu) * inv
    y = gamma * xhat + beta
    return y, (xhat, inv, gamma)


def layer_norm_grad(dy: np.ndarray, cache):
    xhat, inv, gamma = cache
    lead_axes = tuple(range(dy.ndim - 1))
    dgamma = (dy * xhat).sum(axis=lead_axes)
    dbeta = dy.sum(axis=lead_axes)
    dxhat = dy * gamma
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def masked_softmax_last(scores: np.ndarray) -> np.ndarray:
    """Softmax along the last axis; -inf entries get probability zero.

    Every row must contain at least one finite entry.
    """
    m = np.max(scores, axis=-1, keepdims=True)
    z = np.exp(scores - m)
    return z / z.sum(axis=-1, keepdims=True)


def log_softmax_rows(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise log-softmax and softmax for (B, L) logits with -inf masking."""
    m = np.max(logits, axis=1, keepdims=True)
    z = np.exp(logits - m)
    denom = z.sum(axis=1, keepdims=True)
    logp = logits - (m + np.log(denom))
    return logp, z / denom


def dropout(x: np.ndarray, p: float, rng: np.random.Generator | None):
    """Inverted dropout. rng=None means evaluation mode (identity)."""
    if rng is None or p <= 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    scale = 1.0 / (1.0 - p)
    return x * keep * scale, (keep, scale)


def dropout_grad(dy: np.ndarray, cache) -> np.ndarray:
    if cache is None:
        return dy
    keep, scale = cache
    return dy * keep * scale
