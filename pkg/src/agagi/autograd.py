"""Dense tensors with reverse-mode automatic differentiation.

Operations record nodes on the active :class:`Tape` (entered as a context
manager); the backward pass replays the nodes in exact reverse creation
order.  Outside any tape context the same functions run forward-only, which
is what evaluation uses.  Values default to float32; float64 is accepted
everywhere and is what the gradient checker runs in, since float32 central
differences cannot resolve the tolerances we verify against.
"""

from __future__ import annotations

import threading

import numpy as np

from . import kernels

DEFAULT_DTYPE = np.float32

_state = threading.local()


def _active_tape():
    return getattr(_state, "tape", None)


class Tape:
    """Ordered record of operations for one forward/backward pass."""

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active")
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = None
        return False

    def __len__(self):
        return len(self._nodes)

    def _register(self, tensor, op, input_ids, fn):
        node_id = len(self._nodes)
        self._nodes.append(_Node(op, input_ids, tensor, fn))
        tensor.node_id = node_id
        tensor._tape = self
        return node_id

    def _ensure_leaf(self, tensor):
        if tensor._tape is not self:
            self._register(tensor, "leaf", (), None)
        return tensor.node_id

    def backward(self, loss):
        if loss.data.shape != ():
            raise ValueError("backward requires a scalar loss, got shape %r" % (loss.data.shape,))
        if loss._tape is not self:
            raise ValueError("loss was not recorded on this tape")
        loss.grad = np.ones((), dtype=loss.data.dtype)
        for node in reversed(self._nodes):
            if node.fn is None:
                continue
            g = node.out.grad
            if g is None:
                continue
            node.fn(g)


class _Node:
    __slots__ = ("op", "input_ids", "out", "fn")

    def __init__(self, op, input_ids, out, fn):
        self.op = op
        self.input_ids = input_ids
        self.out = out
        self.fn = fn


class Tensor:
    """n-dimensional value with an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_tape")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = None
        self._tape = None
        tape = _active_tape()
        if tape is not None:
            tape._ensure_leaf(self)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def backward(self):
        if self._tape is None:
            raise ValueError("tensor is not attached to a tape")
        self._tape.backward(self)

    def __repr__(self):
        return "Tensor(shape=%r, requires_grad=%r)" % (self.shape, self.requires_grad)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _accum(tensor, g):
    if not tensor.requires_grad:
        return
    g = np.asarray(g, dtype=tensor.data.dtype)
    tensor.grad = g if tensor.grad is None else tensor.grad + g


def _make(op, data, inputs, fn):
    rg = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = rg
    out.node_id = None
    out._tape = None
    tape = _active_tape()
    if tape is not None:
        ids = tuple(tape._ensure_leaf(t) for t in inputs)
        tape._register(out, op, ids, fn if rg else None)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)

    def fn(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make("add", a.data + b.data, (a, b), fn)


def sub(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)

    def fn(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make("sub", a.data - b.data, (a, b), fn)


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)

    def fn(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make("mul", a.data * b.data, (a, b), fn)


def neg(a):
    def fn(g):
        _accum(a, -g)

    return _make("neg", -a.data, (a,), fn)


def scale(a, s):
    """Multiply by a python scalar constant."""
    s = a.data.dtype.type(s)

    def fn(g):
        _accum(a, g * s)

    return _make("scale", a.data * s, (a,), fn)


def apply_mask(a, mask):
    """Elementwise product with a constant array (dropout masks)."""
    mask = np.asarray(mask, dtype=a.data.dtype)

    def fn(g):
        _accum(a, g * mask)

    return _make("apply_mask", a.data * mask, (a,), fn)


# ---------------------------------------------------------------------------
# matrix product

def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    if a.data.ndim == 0 or b.data.ndim == 0:
        raise ValueError("matmul requires at least 1-d operands")
    if a.data.ndim >= 2 and b.data.ndim >= 2:
        if a.data.shape[-1] != b.data.shape[-2]:
            raise ValueError(
                "matmul inner dimensions disagree: %r vs %r" % (a.data.shape, b.data.shape)
            )

        def fn(g):
            _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
            _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

        return _make("matmul", a.data @ b.data, (a, b), fn)
    if b.data.ndim == 1:
        if a.data.shape[-1] != b.data.shape[0]:
            raise ValueError(
                "matmul inner dimensions disagree: %r vs %r" % (a.data.shape, b.data.shape)
            )

        def fn(g):
            ge = np.expand_dims(g, -1)
            _accum(a, _unbroadcast(ge @ b.data[None, :], a.data.shape))
            _accum(b, _unbroadcast((np.swapaxes(a.data, -1, -2) @ ge)[..., 0], b.data.shape))

        return _make("matmul", a.data @ b.data, (a, b), fn)
    # a is 1-d, b has >= 2 dims
    if a.data.shape[0] != b.data.shape[-2]:
        raise ValueError(
            "matmul inner dimensions disagree: %r vs %r" % (a.data.shape, b.data.shape)
        )

    def fn(g):
        ge = np.expand_dims(g, -2)
        _accum(a, _unbroadcast((ge @ np.swapaxes(b.data, -1, -2))[..., 0, :], a.data.shape))
        _accum(b, _unbroadcast(a.data[:, None] @ ge, b.data.shape))

    return _make("matmul", a.data @ b.data, (a, b), fn)


# ---------------------------------------------------------------------------
# activations

def relu(a):
    mask = a.data > 0

    def fn(g):
        _accum(a, g * mask)

    return _make("relu", np.where(mask, a.data, 0), (a,), fn)


def sigmoid(a):
    y = _stable_sigmoid(a.data)

    def fn(g):
        _accum(a, g * y * (1 - y))

    return _make("sigmoid", y, (a,), fn)


def tanh(a):
    y = np.tanh(a.data)

    def fn(g):
        _accum(a, g * (1 - y * y))

    return _make("tanh", y, (a,), fn)


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def valve(a, eps):
    """Banded gate: pass values within eps of 0.5 (closed interval), else 0.

    The open/closed decision is constant in backward; gradient flows through
    the passed value itself.
    """
    if not 0.0 <= eps <= 0.5:
        raise ValueError("valve half-width must lie in [0, 0.5], got %r" % (eps,))
    band = np.abs(a.data - 0.5) <= eps

    def fn(g):
        _accum(a, g * band)

    return _make("valve", np.where(band, a.data, 0), (a,), fn)


# ---------------------------------------------------------------------------
# reductions and shape ops

def reduce_sum(a, axis=None):
    if axis is not None and axis < 0:
        axis = a.data.ndim + axis

    def fn(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape))
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape))

    return _make("sum", np.asarray(a.data.sum(axis=axis)), (a,), fn)


def reshape(a, shape):
    def fn(g):
        _accum(a, g.reshape(a.data.shape))

    return _make("reshape", a.data.reshape(shape), (a,), fn)


def narrow(a, axis, start, length):
    """Contiguous slice along one axis."""
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def fn(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accum(a, full)

    return _make("narrow", a.data[idx].copy(), (a,), fn)


def concat(tensors, axis):
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]

    def fn(g):
        offset = 0
        for t, n in zip(tensors, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + n)
            _accum(t, g[tuple(idx)])
            offset += n

    return _make("concat", np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), fn)


# ---------------------------------------------------------------------------
# attention softmax and loss

def softmax_over_positions(a):
    """Softmax along the last axis, independently for every leading index.

    For a (d, m) feature map this normalizes each feature row across the m
    positions.  Max subtraction keeps the exponentials bounded.
    """
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        _accum(a, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _make("softmax_positions", y, (a,), fn)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of the true classes.

    ``logits`` is (c,) or (batch, c); ``labels`` an int or an int array.
    """
    single = logits.data.ndim == 1
    lg = logits.data[None, :] if single else logits.data
    lb = np.atleast_1d(np.asarray(labels))
    if lb.ndim != 1 or lb.shape[0] != lg.shape[0]:
        raise ValueError("labels shape %r does not match logits %r" % (lb.shape, logits.data.shape))
    if lb.min() < 0 or lb.max() >= lg.shape[1]:
        raise IndexError("class label out of range [0, %d)" % lg.shape[1])
    n = lg.shape[0]
    z = lg - lg.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(n), lb].mean()

    def fn(g):
        p = np.exp(logp)
        p[np.arange(n), lb] -= 1
        gl = (g * p / n).astype(logits.data.dtype)
        _accum(logits, gl[0] if single else gl)

    return _make("cross_entropy", np.asarray(loss, dtype=logits.data.dtype), (logits,), fn)


# ---------------------------------------------------------------------------
# embedding lookup

def embedding_lookup(emb, tokens):
    """Gather embedding rows: (V, k) table and (m,) or (B, m) indices give a
    (k, m) or (B, k, m) matrix whose columns are the token vectors."""
    tokens = np.asarray(tokens)
    gathered = emb.data[tokens]  # (..., m, k), IndexError on out-of-range
    out = np.ascontiguousarray(np.swapaxes(gathered, -1, -2))

    def fn(g):
        gt = np.swapaxes(g, -1, -2)
        full = np.zeros_like(emb.data)
        np.add.at(full, tokens, gt)
        _accum(emb, full)

    return _make("embed", out, (emb,), fn)


# ---------------------------------------------------------------------------
# convolution (kernel-backed)

def _conv_pad_left(h):
    return (h - 1) // 2


def conv1d_same(x, filt, bias):
    """Length-preserving 1-d convolution over positions.

    ``x`` is (k, m) or (B, k, m); ``filt`` a single (h, k) filter or an
    (F, h, k) bank; ``bias`` a scalar or (F,).  Zero padding is (h-1)//2 on
    the left and the remainder on the right, so the output keeps m columns:
    (m,), (F, m), (B, m) or (B, F, m) matching the input forms.
    """
    x = _as_tensor(x)
    filt = _as_tensor(filt, like=x)
    bias = _as_tensor(bias, like=x)
    single_x = x.data.ndim == 2
    single_f = filt.data.ndim == 2
    xb = x.data[None] if single_x else x.data
    fb = filt.data[None] if single_f else filt.data
    bb = np.atleast_1d(bias.data)
    if xb.ndim != 3 or fb.ndim != 3:
        raise ValueError("conv1d_same expects (k, m) or (B, k, m) input")
    if fb.shape[2] != xb.shape[1]:
        raise ValueError(
            "filter width %d does not match input rows %d" % (fb.shape[2], xb.shape[1])
        )
    if bb.shape[0] != fb.shape[0]:
        raise ValueError("bias count %d does not match filters %d" % (bb.shape[0], fb.shape[0]))
    m = xb.shape[2]
    h = fb.shape[1]
    if m < 1:
        raise ValueError("conv1d_same requires at least one position")
    pad_left = _conv_pad_left(h)
    xk = np.ascontiguousarray(np.swapaxes(xb, 1, 2))  # (B, m, k)
    fc = np.ascontiguousarray(fb)
    bc = np.ascontiguousarray(bb)
    y = kernels.conv1d_fwd(xk, fc, bc, pad_left)  # (B, m, F)
    out = np.ascontiguousarray(np.swapaxes(y, 1, 2))  # (B, F, m)
    if single_f:
        out = out[:, 0, :]
    if single_x:
        out = out[0]

    def fn(g):
        gy = g
        if single_x:
            gy = gy[None]
        if single_f:
            gy = gy[:, None, :]
        gy = np.ascontiguousarray(np.swapaxes(gy, 1, 2))  # (B, m, F)
        gx, gw, gb = kernels.conv1d_bwd(xk, fc, gy, pad_left)
        gx = np.swapaxes(gx, 1, 2)
        if single_x:
            gx = gx[0]
        if single_f:
            gw = gw[0]
        _accum(x, gx)
        _accum(filt, gw)
        _accum(bias, gb.reshape(bias.data.shape))

    return _make("conv1d_same", out, (x, filt, bias), fn)


# ---------------------------------------------------------------------------
# LSTM: composed single step, and the fused full sequence

def lstm_step(c_prev, h_prev, x_t, weights):
    """One LSTM cell update built from tape primitives.

    ``weights`` is (wx, wh, b) with gate blocks ordered input, forget,
    candidate, output.  Returns (c_t, h_t).
    """
    wx, wh, b = weights
    d = wh.data.shape[1]
    z = add(add(matmul(wx, x_t), matmul(wh, h_prev)), b)
    gi = sigmoid(narrow(z, 0, 0, d))
    gf = sigmoid(narrow(z, 0, d, d))
    gg = tanh(narrow(z, 0, 2 * d, d))
    go = sigmoid(narrow(z, 0, 3 * d, d))
    c_t = add(mul(gf, c_prev), mul(gi, gg))
    h_t = mul(go, tanh(c_t))
    return c_t, h_t


def lstm_sequence(x, wx, wh, b):
    """Full unidirectional pass with zero initial state, as one tape node.

    ``x`` is (k, m) or (B, k, m); the result stacks the hidden states as
    columns, (d, m) or (B, d, m).  Forward and backward-through-time run in
    the kernel backend.
    """
    single = x.data.ndim == 2
    xb = x.data[None] if single else x.data
    if xb.ndim != 3:
        raise ValueError("lstm_sequence expects (k, m) or (B, k, m) input")
    d = wh.data.shape[1]
    if wx.data.shape != (4 * d, xb.shape[1]) or wh.data.shape != (4 * d, d) or b.data.shape != (4 * d,):
        raise ValueError("inconsistent LSTM weight shapes")
    xk = np.ascontiguousarray(np.swapaxes(xb, 1, 2))  # (B, m, k)
    wxc = np.ascontiguousarray(wx.data)
    whc = np.ascontiguousarray(wh.data)
    bc = np.ascontiguousarray(b.data)
    hs, cs, gates = kernels.lstm_fwd(xk, wxc, whc, bc)
    out = np.ascontiguousarray(np.swapaxes(hs, 1, 2))  # (B, d, m)
    if single:
        out = out[0]

    def fn(g):
        gh = g[None] if single else g
        gh = np.ascontiguousarray(np.swapaxes(gh, 1, 2))  # (B, m, d)
        gx, gwx, gwh, gb = kernels.lstm_bwd(xk, wxc, whc, cs, gates, gh)
        gx = np.swapaxes(gx, 1, 2)
        if single:
            gx = gx[0]
        _accum(x, gx)
        _accum(wx, gwx)
        _accum(wh, gwh)
        _accum(b, gb)

    return _make("lstm_sequence", out, (x, wx, wh, b), fn)
