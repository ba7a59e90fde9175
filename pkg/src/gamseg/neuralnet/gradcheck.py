"""Finite-difference verification of the model's analytic gradients."""
from __future__ import annotations

import numpy as np

from .loss import weighted_bce_grad, weighted_bce_with_logits
from .model import BoundaryModel


def _pattern(model) -> tuple:
    cache = model._cache
    keys = sorted(k for k in cache if k.startswith("relu"))
    parts = [np.packbits(cache[k]).tobytes() for k in keys]
    if "pool" in cache:
        parts.append(cache["pool"][0].tobytes())
    return tuple(parts)


def grad_finite_diff_check(model: BoundaryModel, features, targets, pos_weight=100.0,
                           step=1e-3, samples_per_param=6, seed=0, dropout_seed=1234,
                           max_halvings=12) -> float:
    """Max relative error between backprop and central differences.

    Works on a float64 copy of ``model``. Dropout (if any) uses the same
    mask for every evaluation so the loss is a fixed function of the weights.
    A perturbation that flips any ReLU or pooling decision straddles a kink,
    where a difference quotient says nothing about the derivative; the step
    is halved for that sample until the activation pattern is stable.
    Differences at ``h`` and ``h/2`` are combined by Richardson
    extrapolation, so small gradients are not swamped by curvature.
    """
    m = model.astype(np.float64)
    x = np.asarray(getattr(features, "data", features), dtype=np.float64)
    y = np.asarray(getattr(targets, "values", targets), dtype=np.float64)

    def loss():
        logits = m.forward(x, train=True, rng=np.random.default_rng(dropout_seed))
        return weighted_bce_with_logits(logits, y, pos_weight), _pattern(m)

    logits = m.forward(x, train=True, rng=np.random.default_rng(dropout_seed))
    base_pattern = _pattern(m)
    m.backward(weighted_bce_grad(logits, y, pos_weight))
    analytic = {k: t.grad.copy() for k, t in m.params.items()}

    def central(flat, idx, h):
        orig = flat[idx]
        flat[idx] = orig + h
        up, pat_up = loss()
        flat[idx] = orig - h
        down, pat_down = loss()
        flat[idx] = orig
        return (up - down) / (2 * h), pat_up == base_pattern and pat_down == base_pattern

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, t in m.params.items():
        flat = t.data.reshape(-1)
        k = min(samples_per_param, flat.size)
        for idx in rng.choice(flat.size, size=k, replace=False):
            h = step
            for _ in range(max_halvings + 1):
                coarse, stable = central(flat, idx, h)
                if stable:
                    fine, stable = central(flat, idx, h / 2)
                    if stable:
                        break
                h /= 2
            else:
                # never settled; report the plain central difference at the last step
                fine = coarse
            # Richardson extrapolation cancels the O(h^2) truncation term
            g_num = (4 * fine - coarse) / 3
            g_ana = analytic[name].reshape(-1)[idx]
            err = abs(g_ana - g_num) / max(1e-8, abs(g_ana) + abs(g_num))
            worst = max(worst, err)
    return worst
