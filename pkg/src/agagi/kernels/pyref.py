"""Pure-numpy kernels: reference implementation and import-time fallback.

Same contracts as the compiled backend in ``_ckernels``:

  conv1d_fwd(x, w, b, pad_left)       x (B,m,k), w (F,h,k), b (F,)  -> (B,m,F)
  conv1d_bwd(x, w, gy, pad_left)      -> (gx, gw, gb)
  lstm_fwd(x, wx, wh, b)              x (B,m,k), wx (4d,k), wh (4d,d), b (4d,)
                                      -> (h (B,m,d), c (B,m,d), gates (B,m,4d))
  lstm_bwd(x, wx, wh, c, gates, gh)   -> (gx, gwx, gwh, gb)

Convolution output keeps length m via zero padding of ``pad_left`` columns on
the left and ``h - 1 - pad_left`` on the right.  Gate blocks are ordered
input, forget, candidate, output; ``gates`` stores post-activation values and
``c`` the cell states, which is exactly what the backward pass needs.
"""

import numpy as np

NAME = "python"


def _pad(x, h, pad_left):
    b, m, k = x.shape
    xp = np.zeros((b, m + h - 1, k), dtype=x.dtype)
    xp[:, pad_left : pad_left + m, :] = x
    return xp


def conv1d_fwd(x, w, b, pad_left):
    nb, m, k = x.shape
    nf, h, _ = w.shape
    xp = _pad(x, h, pad_left)
    y = np.empty((nb, m, nf), dtype=x.dtype)
    y[:] = b
    for j in range(h):
        # (B,m,k) @ (k,F), one BLAS call per window offset
        y += xp[:, j : j + m, :] @ w[:, j, :].T
    return y


def conv1d_bwd(x, w, gy, pad_left):
    nb, m, k = x.shape
    nf, h, _ = w.shape
    xp = _pad(x, h, pad_left)
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for j in range(h):
        gxp[:, j : j + m, :] += gy @ w[:, j, :]
        gw[:, j, :] = np.tensordot(gy, xp[:, j : j + m, :], axes=([0, 1], [0, 1]))
    gx = gxp[:, pad_left : pad_left + m, :]
    gb = gy.sum(axis=(0, 1))
    return np.ascontiguousarray(gx), gw, gb


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_fwd(x, wx, wh, b):
    nb, m, k = x.shape
    d = wh.shape[1]
    xproj = x @ wx.T + b  # (B,m,4d)
    h = np.empty((nb, m, d), dtype=x.dtype)
    c = np.empty((nb, m, d), dtype=x.dtype)
    gates = np.empty((nb, m, 4 * d), dtype=x.dtype)
    h_prev = np.zeros((nb, d), dtype=x.dtype)
    c_prev = np.zeros((nb, d), dtype=x.dtype)
    for t in range(m):
        z = xproj[:, t, :] + h_prev @ wh.T
        gi = _sigmoid(z[:, :d])
        gf = _sigmoid(z[:, d : 2 * d])
        gg = np.tanh(z[:, 2 * d : 3 * d])
        go = _sigmoid(z[:, 3 * d :])
        c_t = gf * c_prev + gi * gg
        h_t = go * np.tanh(c_t)
        gates[:, t, :d] = gi
        gates[:, t, d : 2 * d] = gf
        gates[:, t, 2 * d : 3 * d] = gg
        gates[:, t, 3 * d :] = go
        c[:, t, :] = c_t
        h[:, t, :] = h_t
        h_prev, c_prev = h_t, c_t
    return h, c, gates


def lstm_bwd(x, wx, wh, c, gates, gh):
    nb, m, k = x.shape
    d = wh.shape[1]
    gwx = np.zeros_like(wx)
    gwh = np.zeros_like(wh)
    gb = np.zeros(4 * d, dtype=x.dtype)
    gx = np.empty_like(x)
    dh_rec = np.zeros((nb, d), dtype=x.dtype)
    dc_rec = np.zeros((nb, d), dtype=x.dtype)
    zero = np.zeros((nb, d), dtype=x.dtype)
    for t in range(m - 1, -1, -1):
        gi = gates[:, t, :d]
        gf = gates[:, t, d : 2 * d]
        gg = gates[:, t, 2 * d : 3 * d]
        go = gates[:, t, 3 * d :]
        c_t = c[:, t, :]
        c_prev = c[:, t - 1, :] if t > 0 else zero
        tc = np.tanh(c_t)
        dh = gh[:, t, :] + dh_rec
        do = dh * tc
        dc = dc_rec + dh * go * (1.0 - tc * tc)
        di = dc * gg
        dg = dc * gi
        df = dc * c_prev
        dc_rec = dc * gf
        dz = np.concatenate(
            [
                di * gi * (1.0 - gi),
                df * gf * (1.0 - gf),
                dg * (1.0 - gg * gg),
                do * go * (1.0 - go),
            ],
            axis=1,
        )
        gwx += dz.T @ x[:, t, :]
        if t > 0:
            h_prev = gates[:, t - 1, 3 * d :] * np.tanh(c_prev)
            gwh += dz.T @ h_prev
        gb += dz.sum(axis=0)
        gx[:, t, :] = dz @ wx
        dh_rec = dz @ wh
    return gx, gwx, gwh, gb
