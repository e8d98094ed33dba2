"""LSTM recurrence kernels.

The recurrent part of an LSTM cannot be vectorised over time, so these loops
dominate training cost. Each kernel has a numba ``@njit`` version and a plain
numpy version with identical semantics. Set ``PVADBENCH_NO_NUMBA=1`` (or run
without numba installed) to force the numpy path.

Gate layout along the ``4H`` axis is ``[input, forget, candidate, output]``.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("PVADBENCH_NO_NUMBA", "0") not in ("1", "true", "yes")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_forward_numpy(xproj, w_hh_t, h0, c0):
    """Run the recurrence given precomputed input projections.

    xproj: (T, B, 4H) = x @ W_ih.T + b
    w_hh_t: (H, 4H) transposed recurrent weights
    Returns hs (T, B, H), cs (T, B, H), gates (T, B, 4H) post-activation.
    """
    T, B, G = xproj.shape
    H = G // 4
    hs = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    gates = np.empty((T, B, G))
    h = h0.copy()
    c = c0.copy()
    for t in range(T):
        z = xproj[t] + h @ w_hh_t
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[t, :, :H] = i
        gates[t, :, H:2 * H] = f
        gates[t, :, 2 * H:3 * H] = g
        gates[t, :, 3 * H:] = o
        hs[t] = h
        cs[t] = c
    return hs, cs, gates


def lstm_backward_numpy(dhs, gates, hs, cs, h0, c0, w_hh_t):
    """Backpropagate through the recurrence.

    Returns dz (T, B, 4H) pre-activation gradients, dw_hh_t (H, 4H), dh0, dc0.
    The caller turns dz into gradients for W_ih, b and the layer input.
    """
    T, B, H = dhs.shape
    dz = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i = gates[t, :, :H]
        f = gates[t, :, H:2 * H]
        g = gates[t, :, 2 * H:3 * H]
        o = gates[t, :, 3 * H:]
        c = cs[t]
        c_prev = cs[t - 1] if t > 0 else c0
        tc = np.tanh(c)
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz[t, :, :H] = dc * g * i * (1.0 - i)
        dz[t, :, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[t, :, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[t, :, 3 * H:] = dh * tc * o * (1.0 - o)
        dh_next = dz[t] @ w_hh_t.T
        dc_next = dc * f
    return dz, _recurrent_weight_grad(dz, hs, h0), dh_next, dc_next


def _recurrent_weight_grad(dz, hs, h0):
    # one GEMM over all steps instead of T rank-B updates
    T, B, H = hs.shape
    h_prev = np.concatenate((h0[None], hs[:-1]), axis=0).reshape(T * B, H)
    return h_prev.T @ dz.reshape(T * B, 4 * H)


if numba is not None:

    @numba.njit(cache=True, fastmath=False)
    def lstm_forward_numba(xproj, w_hh_t, h0, c0):
        T, B, G = xproj.shape
        H = G // 4
        hs = np.empty((T, B, H))
        cs = np.empty((T, B, H))
        gates = np.empty((T, B, G))
        h = h0.copy()
        c = c0.copy()
        for t in range(T):
            z = np.dot(h, w_hh_t)
            for b in range(B):
                for k in range(H):
                    zi = xproj[t, b, k] + z[b, k]
                    zf = xproj[t, b, H + k] + z[b, H + k]
                    zg = xproj[t, b, 2 * H + k] + z[b, 2 * H + k]
                    zo = xproj[t, b, 3 * H + k] + z[b, 3 * H + k]
                    ig = 1.0 / (1.0 + np.exp(-zi))
                    fg = 1.0 / (1.0 + np.exp(-zf))
                    gg = np.tanh(zg)
                    og = 1.0 / (1.0 + np.exp(-zo))
                    cc = fg * c[b, k] + ig * gg
                    c[b, k] = cc
                    h[b, k] = og * np.tanh(cc)
                    gates[t, b, k] = ig
                    gates[t, b, H + k] = fg
                    gates[t, b, 2 * H + k] = gg
                    gates[t, b, 3 * H + k] = og
                    hs[t, b, k] = h[b, k]
                    cs[t, b, k] = cc
        return hs, cs, gates

    @numba.njit(cache=True, fastmath=False)
    def lstm_backward_numba(dhs, gates, hs, cs, h0, c0, w_hh_t):
        T, B, H = dhs.shape
        dz = np.empty((T, B, 4 * H))
        w_hh = np.ascontiguousarray(w_hh_t.T)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        dzt = np.empty((B, 4 * H))
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for k in range(H):
                    ig = gates[t, b, k]
                    fg = gates[t, b, H + k]
                    gg = gates[t, b, 2 * H + k]
                    og = gates[t, b, 3 * H + k]
                    cp = cs[t - 1, b, k] if t > 0 else c0[b, k]
                    tc = np.tanh(cs[t, b, k])
                    dh = dhs[t, b, k] + dh_next[b, k]
                    dc = dc_next[b, k] + dh * og * (1.0 - tc * tc)
                    dzt[b, k] = dc * gg * ig * (1.0 - ig)
                    dzt[b, H + k] = dc * cp * fg * (1.0 - fg)
                    dzt[b, 2 * H + k] = dc * ig * (1.0 - gg * gg)
                    dzt[b, 3 * H + k] = dh * tc * og * (1.0 - og)
                    dc_next[b, k] = dc * fg
            dz[t] = dzt
            dh_next = np.dot(dzt, w_hh)
        return dz, dh_next, dc_next


def lstm_forward(xproj, w_hh_t, h0, c0):
    if USE_NUMBA:
        return lstm_forward_numba(xproj, w_hh_t, h0, c0)
    return lstm_forward_numpy(xproj, w_hh_t, h0, c0)


def lstm_backward(dhs, gates, hs, cs, h0, c0, w_hh_t):
    """Returns dz (T, B, 4H) pre-activation gradients, dw_hh_t (H, 4H), dh0, dc0."""
    if USE_NUMBA:
        dz, dh0, dc0 = lstm_backward_numba(dhs, gates, hs, cs, h0, c0, w_hh_t)
        return dz, _recurrent_weight_grad(dz, hs, h0), dh0, dc0
    return lstm_backward_numpy(dhs, gates, hs, cs, h0, c0, w_hh_t)
