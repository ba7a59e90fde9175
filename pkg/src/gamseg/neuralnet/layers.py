"""Forward/backward pairs for the layers the boundary model uses.

Each ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from ._recurrence import lstm_backward as _lstm_bptt
from ._recurrence import lstm_forward as _lstm_scan

_OFFSETS = [(di, dj) for di in range(3) for dj in range(3)]


def conv2d_forward(x, weight, bias):
    """3x3 cross-correlation, stride 1, zero padding 1.

    x: (C_in, T, F); weight: (C_out, C_in, 3, 3); bias: (C_out,).
    """
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ShapeMismatch(f"conv2d expects (C,T,F) input and (O,C,3,3) kernel, "
                            f"got {x.shape} and {weight.shape}")
    if weight.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"kernel expects {weight.shape[1]} input channels, got {x.shape[0]}")
    c_in, T, F = x.shape
    c_out = weight.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.empty((c_out, T * F), dtype=x.dtype)
    out[:] = bias[:, None]
    for di, dj in _OFFSETS:
        shifted = xp[:, di:di + T, dj:dj + F].reshape(c_in, T * F)
        out += weight[:, :, di, dj] @ shifted
    return out.reshape(c_out, T, F), (xp, weight)


def conv2d_backward(dout, cache, need_input_grad=True):
    xp, weight = cache
    c_out, T, F = dout.shape
    c_in = xp.shape[0]
    d2 = dout.reshape(c_out, T * F)
    dweight = np.empty_like(weight)
    dxp = np.zeros_like(xp) if need_input_grad else None
    for di, dj in _OFFSETS:
        shifted = xp[:, di:di + T, dj:dj + F].reshape(c_in, T * F)
        dweight[:, :, di, dj] = d2 @ shifted.T
        if need_input_grad:
            dxp[:, di:di + T, dj:dj + F] += (weight[:, :, di, dj].T @ d2).reshape(c_in, T, F)
    dbias = d2.sum(axis=1)
    dx = dxp[:, 1:-1, 1:-1] if need_input_grad else None
    return dx, dweight, dbias


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def maxpool_time_forward(x):
    """Max over non-overlapping pairs of frames (C, T, F) -> (C, ceil(T/2), F)."""
    c, T, F = x.shape
    if T % 2:
        x = np.concatenate([x, np.full((c, 1, F), -np.inf, dtype=x.dtype)], axis=1)
    pairs = x.reshape(c, -1, 2, F)
    idx = pairs.argmax(axis=2)
    out = np.take_along_axis(pairs, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return out, (idx, T)


def maxpool_time_backward(dout, cache):
    idx, T = cache
    c, T2, F = dout.shape
    dpairs = np.zeros((c, T2, 2, F), dtype=dout.dtype)
    np.put_along_axis(dpairs, idx[:, :, None, :], dout[:, :, None, :], axis=2)
    return dpairs.reshape(c, 2 * T2, F)[:, :T, :]


def lstm_cell_step(x, h_prev, c_prev, w_ih, w_hh, bias):
    """One step of the standard LSTM equations (gate order i, f, g, o)."""
    H = h_prev.shape[-1]
    if w_ih.shape != (4 * H, x.shape[-1]) or w_hh.shape != (4 * H, H) or bias.shape != (4 * H,):
        raise ShapeMismatch("LSTM parameter shapes do not match input/hidden sizes")
    z = w_ih @ x + w_hh @ h_prev + bias
    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    i, f, g, o = sig(z[:H]), sig(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), sig(z[3 * H:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def lstm_forward(x, w_ih, w_hh, bias, reverse=False):
    """Run one LSTM direction over a (T, D) sequence from zero state."""
    T, D = x.shape
    H = w_hh.shape[1]
    if w_ih.shape != (4 * H, D):
        raise ShapeMismatch(f"w_ih shape {w_ih.shape} does not fit input width {D}")
    seq = x[::-1] if reverse else x
    xproj = np.ascontiguousarray(seq @ w_ih.T + bias)
    zeros = np.zeros(H, dtype=x.dtype)
    hs, cs, gates = _lstm_scan(xproj, np.ascontiguousarray(w_hh), zeros, zeros)
    out = hs[::-1] if reverse else hs
    return out, (seq, hs, cs, gates, w_ih, w_hh, reverse)


def lstm_backward(dout, cache):
    seq, hs, cs, gates, w_ih, w_hh, reverse = cache
    H = w_hh.shape[1]
    dhs = np.ascontiguousarray(dout[::-1] if reverse else dout)
    zeros = np.zeros(H, dtype=dout.dtype)
    dz, _, _ = _lstm_bptt(dhs, gates, cs, np.ascontiguousarray(w_hh), zeros)
    h_prev = np.vstack([zeros[None, :], hs[:-1]])
    dw_hh = dz.T @ h_prev
    dw_ih = dz.T @ seq
    dbias = dz.sum(axis=0)
    dseq = dz @ w_ih
    dx = dseq[::-1] if reverse else dseq
    return dx, dw_ih, dw_hh, dbias


def dropout_mask(shape, p, rng, dtype):
    """Inverted-dropout mask: zeros with probability p, else 1/(1-p)."""
    if p <= 0:
        return None
    keep = rng.random(shape) >= p
    return (keep / (1.0 - p)).astype(dtype)


def linear_forward(x, weight, bias):
    return x @ weight.T + bias, x


def linear_backward(dout, x, weight):
    return dout @ weight, dout.T @ x, dout.sum(axis=0)
