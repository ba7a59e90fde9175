"""Class-weighted binary cross-entropy on logits."""
from __future__ import annotations

import numpy as np

from ..errors import LengthMismatch


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _prepare(logits, targets, mask):
    x = np.asarray(logits, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.size} logits vs {y.size} targets")
    if mask is None:
        m = np.ones_like(x)
    else:
        m = np.asarray(mask, dtype=np.float64).ravel()
        if m.shape != x.shape:
            raise LengthMismatch(f"mask has {m.size} entries, expected {x.size}")
    return x, y, m


def weighted_bce_with_logits(logits, targets, pos_weight: float = 100.0, mask=None) -> float:
    """Mean of -[w*y*log(sigmoid(x)) + (1-y)*log(1-sigmoid(x))] over unmasked frames.

    Uses log(sigmoid(x)) = -softplus(-x) and log(1-sigmoid(x)) = -softplus(x).
    """
    x, y, m = _prepare(logits, targets, mask)
    n = m.sum()
    if n == 0:
        return 0.0
    per_frame = pos_weight * y * _softplus(-x) + (1.0 - y) * _softplus(x)
    return float((per_frame * m).sum() / n)


def weighted_bce_grad(logits, targets, pos_weight: float = 100.0, mask=None) -> np.ndarray:
    """Gradient of :func:`weighted_bce_with_logits` with respect to the logits."""
    x, y, m = _prepare(logits, targets, mask)
    n = m.sum()
    if n == 0:
        return np.zeros_like(x)
    s = sigmoid(x)
    g = pos_weight * y * (s - 1.0) + (1.0 - y) * s
    return g * m / n


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
