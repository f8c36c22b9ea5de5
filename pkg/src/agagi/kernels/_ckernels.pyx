# Compiled kernels for the conv and LSTM inner loops.  Contracts and layouts
# match kernels/pyref.py; keep the two in sync.

import numpy as np

cimport cython
from libc.math cimport exp, tanh

ctypedef fused floating:
    float
    double

NAME = "compiled"


cdef inline floating _sigm(floating z) noexcept nogil:
    cdef floating e
    if z >= 0:
        e = <floating>exp(-z)
        return <floating>(1.0 / (1.0 + e))
    e = <floating>exp(z)
    return <floating>(e / (1.0 + e))


def conv1d_fwd(floating[:, :, ::1] x, floating[:, :, ::1] w, floating[::1] b, int pad_left):
    cdef Py_ssize_t nb = x.shape[0], m = x.shape[1], k = x.shape[2]
    cdef Py_ssize_t nf = w.shape[0], h = w.shape[1]
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    y_np = np.empty((nb, m, nf), dtype=dtype)
    cdef floating[:, :, ::1] y = y_np
    cdef Py_ssize_t bi, i, f, j, kk, src
    cdef floating acc
    with nogil:
        for bi in range(nb):
            for i in range(m):
                for f in range(nf):
                    acc = b[f]
                    for j in range(h):
                        src = i + j - pad_left
                        if 0 <= src < m:
                            for kk in range(k):
                                acc = acc + w[f, j, kk] * x[bi, src, kk]
                    y[bi, i, f] = acc
    return y_np


def conv1d_bwd(floating[:, :, ::1] x, floating[:, :, ::1] w, floating[:, :, ::1] gy, int pad_left):
    cdef Py_ssize_t nb = x.shape[0], m = x.shape[1], k = x.shape[2]
    cdef Py_ssize_t nf = w.shape[0], h = w.shape[1]
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    gx_np = np.zeros((nb, m, k), dtype=dtype)
    gw_np = np.zeros((nf, h, k), dtype=dtype)
    gb_np = np.zeros(nf, dtype=dtype)
    cdef floating[:, :, ::1] gx = gx_np
    cdef floating[:, :, ::1] gw = gw_np
    cdef floating[::1] gb = gb_np
    cdef Py_ssize_t bi, i, f, j, kk, src
    cdef floating g
    with nogil:
        for bi in range(nb):
            for i in range(m):
                for f in range(nf):
                    g = gy[bi, i, f]
                    gb[f] = gb[f] + g
                    for j in range(h):
                        src = i + j - pad_left
                        if 0 <= src < m:
                            for kk in range(k):
                                gx[bi, src, kk] = gx[bi, src, kk] + g * w[f, j, kk]
                                gw[f, j, kk] = gw[f, j, kk] + g * x[bi, src, kk]
    return gx_np, gw_np, gb_np


def lstm_fwd(x, wx, wh, b):
    # x-projection is one big BLAS product; the recurrence runs in C below.
    xproj = np.ascontiguousarray(x @ wx.T + b)
    return _lstm_fwd_loop(x, xproj, wh)


def _lstm_fwd_loop(floating[:, :, ::1] x, floating[:, :, ::1] xproj, floating[:, ::1] wh):
    cdef Py_ssize_t nb = x.shape[0], m = x.shape[1]
    cdef Py_ssize_t d = wh.shape[1]
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    h_np = np.empty((nb, m, d), dtype=dtype)
    c_np = np.empty((nb, m, d), dtype=dtype)
    g_np = np.empty((nb, m, 4 * d), dtype=dtype)
    hp_np = np.zeros((nb, d), dtype=dtype)
    cp_np = np.zeros((nb, d), dtype=dtype)
    z_np = np.empty((nb, 4 * d), dtype=dtype)
    cdef floating[:, :, ::1] h = h_np
    cdef floating[:, :, ::1] c = c_np
    cdef floating[:, :, ::1] gates = g_np
    cdef floating[:, ::1] h_prev = hp_np
    cdef floating[:, ::1] c_prev = cp_np
    cdef floating[:, ::1] z = z_np
    cdef Py_ssize_t t, bi, q, dd
    cdef floating acc, gi, gf, gg, go, ct, ht
    with nogil:
        for t in range(m):
            for bi in range(nb):
                for q in range(4 * d):
                    acc = xproj[bi, t, q]
                    for dd in range(d):
                        acc = acc + wh[q, dd] * h_prev[bi, dd]
                    z[bi, q] = acc
            for bi in range(nb):
                for dd in range(d):
                    gi = _sigm(z[bi, dd])
                    gf = _sigm(z[bi, d + dd])
                    gg = <floating>tanh(z[bi, 2 * d + dd])
                    go = _sigm(z[bi, 3 * d + dd])
                    ct = gf * c_prev[bi, dd] + gi * gg
                    ht = go * <floating>tanh(ct)
                    gates[bi, t, dd] = gi
                    gates[bi, t, d + dd] = gf
                    gates[bi, t, 2 * d + dd] = gg
                    gates[bi, t, 3 * d + dd] = go
                    c[bi, t, dd] = ct
                    h[bi, t, dd] = ht
                    h_prev[bi, dd] = ht
                    c_prev[bi, dd] = ct
    return h_np, c_np, g_np


def lstm_bwd(floating[:, :, ::1] x, floating[:, ::1] wx, floating[:, ::1] wh,
             floating[:, :, ::1] c, floating[:, :, ::1] gates, floating[:, :, ::1] gh):
    cdef Py_ssize_t nb = x.shape[0], m = x.shape[1], k = x.shape[2]
    cdef Py_ssize_t d = wh.shape[1]
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    gx_np = np.zeros((nb, m, k), dtype=dtype)
    gwx_np = np.zeros((4 * d, k), dtype=dtype)
    gwh_np = np.zeros((4 * d, d), dtype=dtype)
    gb_np = np.zeros(4 * d, dtype=dtype)
    dh_np = np.zeros((nb, d), dtype=dtype)
    dc_np = np.zeros((nb, d), dtype=dtype)
    dz_np = np.empty((nb, 4 * d), dtype=dtype)
    hp_np = np.empty(d, dtype=dtype)
    cdef floating[:, :, ::1] gx = gx_np
    cdef floating[:, ::1] gwx = gwx_np
    cdef floating[:, ::1] gwh = gwh_np
    cdef floating[::1] gb = gb_np
    cdef floating[:, ::1] dh_rec = dh_np
    cdef floating[:, ::1] dc_rec = dc_np
    cdef floating[:, ::1] dz = dz_np
    cdef floating[::1] hprev = hp_np
    cdef Py_ssize_t t, bi, q, dd, kk
    cdef floating gi, gf, gg, go, ct, cprev, tc, dh, dc, di, dg, df, do, v
    with nogil:
        for t in range(m - 1, -1, -1):
            for bi in range(nb):
                for dd in range(d):
                    gi = gates[bi, t, dd]
                    gf = gates[bi, t, d + dd]
                    gg = gates[bi, t, 2 * d + dd]
                    go = gates[bi, t, 3 * d + dd]
                    ct = c[bi, t, dd]
                    cprev = c[bi, t - 1, dd] if t > 0 else <floating>0.0
                    tc = <floating>tanh(ct)
                    dh = gh[bi, t, dd] + dh_rec[bi, dd]
                    do = dh * tc
                    dc = dc_rec[bi, dd] + dh * go * (1.0 - tc * tc)
                    di = dc * gg
                    dg = dc * gi
                    df = dc * cprev
                    dc_rec[bi, dd] = dc * gf
                    dz[bi, dd] = di * gi * (1.0 - gi)
                    dz[bi, d + dd] = df * gf * (1.0 - gf)
                    dz[bi, 2 * d + dd] = dg * (1.0 - gg * gg)
                    dz[bi, 3 * d + dd] = do * go * (1.0 - go)
            for bi in range(nb):
                for q in range(4 * d):
                    v = dz[bi, q]
                    gb[q] = gb[q] + v
                    for kk in range(k):
                        gwx[q, kk] = gwx[q, kk] + v * x[bi, t, kk]
                if t > 0:
                    for dd in range(d):
                        hprev[dd] = gates[bi, t - 1, 3 * d + dd] * <floating>tanh(c[bi, t - 1, dd])
                    for q in range(4 * d):
                        v = dz[bi, q]
                        for dd in range(d):
                            gwh[q, dd] = gwh[q, dd] + v * hprev[dd]
                for kk in range(k):
                    v = 0.0
                    for q in range(4 * d):
                        v = v + dz[bi, q] * wx[q, kk]
                    gx[bi, t, kk] = v
                for dd in range(d):
                    v = 0.0
                    for q in range(4 * d):
                        v = v + dz[bi, q] * wh[q, dd]
                    dh_rec[bi, dd] = v
    return gx_np, gwx_np, gwh_np, gb_np
