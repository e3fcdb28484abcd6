"""Fused LSTM recurrence kernels with hand-derived backward passes.

The per-token recurrence is the one loop in the model that cannot be
vectorized over time, so it is written once in numba-compilable numpy and
compiled on the active backend (backend.py). The uncompiled function object
doubles as the pure-numpy fallback; both paths share the same arithmetic.

Weight layout: the four gates are row-stacked into one matrix
w[4h x (d_in + h)] in gate order (input, forget, output, cell) with a
matching bias b[4h]. Hidden and cell states start at zero.
"""

import numpy as np

from . import backend
from .errors import ConfigError


def _lstm_forward_impl(x, w, b):
    """Run the recurrence left to right over x[n, d_in].

    Returns (h_out[n, h], hs[n+1, h], cs[n+1, h], gates[n, 4h], tanhc[n, h]);
    everything past h_out is the cache consumed by the backward kernel.
    """
    n, d_in = x.shape
    four_h = b.shape[0]
    h = four_h // 4
    hs = np.zeros((n + 1, h))
    cs = np.zeros((n + 1, h))
    gates = np.zeros((n, four_h))
    tanhc = np.zeros((n, h))
    xh = np.empty(d_in + h)
    for t in range(n):
        xh[:d_in] = x[t]
        xh[d_in:] = hs[t]
        a = w @ xh + b
        gi = 1.0 / (1.0 + np.exp(-a[:h]))
        gf = 1.0 / (1.0 + np.exp(-a[h : 2 * h]))
        go = 1.0 / (1.0 + np.exp(-a[2 * h : 3 * h]))
        gc = np.tanh(a[3 * h :])
        c = gf * cs[t] + gi * gc
        tc = np.tanh(c)
        cs[t + 1] = c
        hs[t + 1] = go * tc
        gates[t, :h] = gi
        gates[t, h : 2 * h] = gf
        gates[t, 2 * h : 3 * h] = go
        gates[t, 3 * h :] = gc
        tanhc[t] = tc
    return hs[1:].copy(), hs, cs, gates, tanhc


def _lstm_backward_impl(x, w, hs, cs, gates, tanhc, d_out):
    """Reverse sweep: d_out[n, h] -> (dx[n, d_in], dw, db)."""
    n, d_in = x.shape
    four_h = w.shape[0]
    h = four_h // 4
    wt = np.ascontiguousarray(w.T)
    dx = np.zeros((n, d_in))
    dw = np.zeros(w.shape)
    db = np.zeros(four_h)
    dh_carry = np.zeros(h)
    dc_carry = np.zeros(h)
    xh = np.empty(d_in + h)
    da = np.empty(four_h)
    for t in range(n - 1, -1, -1):
        gi = gates[t, :h]
        gf = gates[t, h : 2 * h]
        go = gates[t, 2 * h : 3 * h]
        gc = gates[t, 3 * h :]
        tc = tanhc[t]
        dh = d_out[t] + dh_carry
        do = dh * tc
        dc = dh * go * (1.0 - tc * tc) + dc_carry
        di = dc * gc
        dg = dc * gi
        df = dc * cs[t]
        dc_carry = dc * gf
        da[:h] = di * gi * (1.0 - gi)
        da[h : 2 * h] = df * gf * (1.0 - gf)
        da[2 * h : 3 * h] = do * go * (1.0 - go)
        da[3 * h :] = dg * (1.0 - gc * gc)
        db += da
        xh[:d_in] = x[t]
        xh[d_in:] = hs[t]
        dw += np.outer(da, xh)
        dxh = wt @ da
        dx[t] = dxh[:d_in]
        dh_carry = dxh[d_in:]
    return dx, dw, db


_IMPLS: dict[str, tuple] = {"numpy": (_lstm_forward_impl, _lstm_backward_impl)}


def kernel_pair(name: str):
    """Return (lstm_forward, lstm_backward) for a backend, compiling lazily."""
    if name not in _IMPLS:
        if name != "numba":
            raise ConfigError(f"unknown kernel backend {name!r}")
        _IMPLS["numba"] = (
            backend.compile_kernel(_lstm_forward_impl),
            backend.compile_kernel(_lstm_backward_impl),
        )
    return _IMPLS[name]


lstm_forward, lstm_backward = kernel_pair(backend.ACTIVE)
