"""Compiled LSTM time loops (one direction, one sequence).

Gate layout along the 4H axis is input, forget, candidate, output.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    z = np.exp(x)
    return z / (1.0 + z)


@njit(cache=True)
def lstm_forward(xproj, w_hh, h0, c0):
    """Run the recurrence over pre-projected inputs ``xproj`` (T, 4H).

    Returns hidden states, cell states and activated gates.
    """
    T = xproj.shape[0]
    H = w_hh.shape[1]
    hs = np.empty((T, H), dtype=xproj.dtype)
    cs = np.empty((T, H), dtype=xproj.dtype)
    gates = np.empty((T, 4 * H), dtype=xproj.dtype)
    h = h0.copy()
    c = c0.copy()
    z = np.empty(4 * H, dtype=xproj.dtype)
    for t in range(T):
        for k in range(4 * H):
            acc = xproj[t, k]
            for j in range(H):
                acc += w_hh[k, j] * h[j]
            z[k] = acc
        for j in range(H):
            ig = _sigmoid(z[j])
            fg = _sigmoid(z[H + j])
            gg = np.tanh(z[2 * H + j])
            og = _sigmoid(z[3 * H + j])
            c[j] = fg * c[j] + ig * gg
            h[j] = og * np.tanh(c[j])
            gates[t, j] = ig
            gates[t, H + j] = fg
            gates[t, 2 * H + j] = gg
            gates[t, 3 * H + j] = og
        hs[t] = h
        cs[t] = c
    return hs, cs, gates


@njit(cache=True)
def lstm_backward(dhs, gates, cs, w_hh, c0):
    """Backpropagate through time.

    ``dhs`` is the loss gradient w.r.t. each emitted hidden state. Returns
    the gradient w.r.t. the gate pre-activations (T, 4H) plus the
    gradients for the initial hidden and cell state.
    """
    T = dhs.shape[0]
    H = w_hh.shape[1]
    dz = np.empty((T, 4 * H), dtype=dhs.dtype)
    dh_next = np.zeros(H, dtype=dhs.dtype)
    dc_next = np.zeros(H, dtype=dhs.dtype)
    for t in range(T - 1, -1, -1):
        for j in range(H):
            ig = gates[t, j]
            fg = gates[t, H + j]
            gg = gates[t, 2 * H + j]
            og = gates[t, 3 * H + j]
            c_prev = cs[t - 1, j] if t > 0 else c0[j]
            tc = np.tanh(cs[t, j])
            dh = dhs[t, j] + dh_next[j]
            dc = dh * og * (1.0 - tc * tc) + dc_next[j]
            dz[t, j] = dc * gg * ig * (1.0 - ig)
            dz[t, H + j] = dc * c_prev * fg * (1.0 - fg)
            dz[t, 2 * H + j] = dc * ig * (1.0 - gg * gg)
            dz[t, 3 * H + j] = dh * tc * og * (1.0 - og)
            dc_next[j] = dc * fg
        for j in range(H):
            acc = 0.0
            for k in range(4 * H):
                acc += w_hh[k, j] * dz[t, k]
            dh_next[j] = acc
    return dz, dh_next, dc_next
