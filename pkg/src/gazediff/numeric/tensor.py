"""Tensors with taped reverse-mode gradients.

Forward values are plain numpy arrays (float32 or float64, never mixed).
While a Tape is active, every primitive appends a record holding its
inputs, its output and a closure that maps the output gradient to input
gradients.  Walking the records in reverse execution order (which is a
valid reverse topological order, because inputs are always produced
before their consumers) accumulates gradients for every leaf tensor
reachable from the loss.

Broadcasting is deliberately restricted: elementwise ops demand equal
shapes, and only matmul broadcasts a stacked leading batch against a 2D
operand.  The two bias primitives (`bias_add`, `channel_add`) cover the
remaining shape patterns the denoiser needs, each with a hand-written
backward rule.
"""

from __future__ import annotations

import threading

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NumericError",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "matmul",
    "conv1d",
    "conv1d_transpose",
    "bias_add",
    "channel_add",
    "silu",
    "softmax",
    "layernorm",
    "tsum",
    "tmean",
    "gather",
    "reshape",
    "transpose",
    "concat",
]


class ShapeError(ValueError):
    """Operand shapes do not conform; the message reports both shapes."""


class NumericError(ArithmeticError):
    """A forward value became non-finite."""


_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A numpy array plus gradient bookkeeping.

    `requires_grad` marks trainable leaves.  `grad` is populated by
    `Tape.backward` and always has the same shape and dtype as `data`.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_on_tape")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._on_tape = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self):
        head = f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}"
        if self.name:
            head += f", name={self.name!r}"
        return head + ")"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


# ---------------------------------------------------------------------------
# Tape

_state = threading.local()


def _current_tape():
    return getattr(_state, "tape", None)


class Tape:
    """Ordered record of primitive operations for one backward pass.

    Use as a context manager around the forward computation; afterwards
    `gradients(loss)` returns the gradient for every leaf tensor on the
    tape.  `gradients` is pure: calling it twice returns bitwise
    identical arrays.
    """

    def __init__(self):
        self._records = []

    def __enter__(self):
        if _current_tape() is not None:
            raise RuntimeError("a Tape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = None
        return False

    def __len__(self):
        return len(self._records)

    def gradients(self, loss):
        """Gradients of a scalar `loss` w.r.t. every leaf on the tape.

        Returns a dict mapping leaf Tensor -> numpy gradient array.
        Leaves are tensors that appear as inputs but were never produced
        by a taped op (parameters and tracked inputs).
        """
        if loss.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        if not loss._on_tape:
            raise RuntimeError("loss does not depend on any tracked tensor")
        pending = {id(loss): np.ones_like(loss.data)}
        refs = {id(loss): loss}
        for inputs, out, backward in reversed(self._records):
            gy = pending.pop(id(out), None)
            if gy is None:
                continue
            for t, gx in zip(inputs, backward(gy)):
                if gx is None or not (t._on_tape or t.requires_grad):
                    continue
                got = pending.get(id(t))
                pending[id(t)] = gx if got is None else got + gx
                refs[id(t)] = t
        return {refs[i]: g for i, g in pending.items() if refs[i] is not loss}

    def backward(self, loss):
        """Compute gradients and assign them to `.grad` (overwriting)."""
        for t, g in self.gradients(loss).items():
            if t.requires_grad:
                t.grad = g


def _trace(out, inputs, backward):
    tape = _current_tape()
    if tape is not None and any(t._on_tape or t.requires_grad for t in inputs):
        out._on_tape = True
        tape._records.append((inputs, out, backward))
    return out


def _check_same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not match")


def _check_same_dtype(op, a, b):
    if a.dtype != b.dtype:
        raise ShapeError(f"{op}: dtypes {a.dtype} and {b.dtype} do not match")


# ---------------------------------------------------------------------------
# Elementwise and scalar primitives


def add(a, b):
    _check_same_shape("add", a, b)
    _check_same_dtype("add", a, b)
    out = Tensor(a.data + b.data)
    return _trace(out, (a, b), lambda gy: (gy, gy))


def sub(a, b):
    _check_same_shape("sub", a, b)
    _check_same_dtype("sub", a, b)
    out = Tensor(a.data - b.data)
    return _trace(out, (a, b), lambda gy: (gy, -gy))


def mul(a, b):
    _check_same_shape("mul", a, b)
    _check_same_dtype("mul", a, b)
    out = Tensor(a.data * b.data)
    return _trace(out, (a, b), lambda gy: (gy * b.data, gy * a.data))


def scale(x, c):
    c = x.data.dtype.type(c)
    out = Tensor(x.data * c)
    return _trace(out, (x,), lambda gy: (gy * c,))


def neg(x):
    out = Tensor(-x.data)
    return _trace(out, (x,), lambda gy: (-gy,))


def _unbroadcast(grad, shape):
    """Reduce a gradient back to `shape` after leading-batch broadcast."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims of {a.shape} and {b.shape} do not match")
    _check_same_dtype("matmul", a, b)
    out = Tensor(np.matmul(a.data, b.data))

    def backward(gy):
        ga = np.matmul(gy, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), gy)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _trace(out, (a, b), backward)


def bias_add(x, b):
    """x + b with b broadcast over all leading dims; b is 1D of size x.shape[-1]."""
    if b.ndim != 1 or b.shape[0] != x.shape[-1]:
        raise ShapeError(f"bias_add: bias {b.shape} does not fit last dim of {x.shape}")
    _check_same_dtype("bias_add", x, b)
    out = Tensor(x.data + b.data)
    axes = tuple(range(x.ndim - 1))
    return _trace(out, (x, b), lambda gy: (gy, gy.sum(axis=axes)))


def channel_add(x, v):
    """x (B,C,L) + v (B,C) broadcast over the trailing length axis."""
    if x.ndim != 3 or v.ndim != 2 or x.shape[:2] != v.shape:
        raise ShapeError(f"channel_add: shapes {x.shape} and {v.shape} do not conform")
    _check_same_dtype("channel_add", x, v)
    out = Tensor(x.data + v.data[:, :, None])
    return _trace(out, (x, v), lambda gy: (gy, gy.sum(axis=2)))


# ---------------------------------------------------------------------------
# Nonlinearities and normalization


def silu(x):
    sig = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(x.data * sig)

    def backward(gy):
        return (gy * (sig * (1.0 + x.data * (1.0 - sig))),)

    return _trace(out, (x,), backward)


def softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def backward(gy):
        dot = (gy * y).sum(axis=axis, keepdims=True)
        return (y * (gy - dot),)

    return _trace(out, (x,), backward)


def layernorm(x, gain, bias, axis=-1, eps=1e-5):
    """Normalize over one axis, then scale/shift with 1D gain and bias."""
    n = x.shape[axis]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(
            f"layernorm: gain {gain.shape} / bias {bias.shape} do not fit axis "
            f"{axis} of {x.shape}"
        )
    _check_same_dtype("layernorm", x, gain)
    axis = axis % x.ndim
    bshape = [1] * x.ndim
    bshape[axis] = n
    g = gain.data.reshape(bshape)
    b = bias.data.reshape(bshape)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xh = xc * inv
    out = Tensor(xh * g + b)
    reduce_axes = tuple(i for i in range(x.ndim) if i != axis)

    def backward(gy):
        gxh = gy * g
        m1 = gxh.mean(axis=axis, keepdims=True)
        m2 = (gxh * xh).mean(axis=axis, keepdims=True)
        gx = inv * (gxh - m1 - xh * m2)
        ggain = (gy * xh).sum(axis=reduce_axes)
        gbias = gy.sum(axis=reduce_axes)
        return gx.astype(x.data.dtype, copy=False), ggain, gbias

    return _trace(out, (x, gain, bias), backward)


# ---------------------------------------------------------------------------
# Reductions


def tsum(x, axis=None):
    out = Tensor(x.data.sum(axis=axis))

    def backward(gy):
        if axis is None:
            return (np.broadcast_to(gy, x.shape).astype(x.data.dtype, copy=False),)
        g = np.expand_dims(gy, axis)
        return (np.broadcast_to(g, x.shape).astype(x.data.dtype, copy=False),)

    return _trace(out, (x,), backward)


def tmean(x, axis=None):
    count = x.size if axis is None else x.shape[axis]
    out = Tensor(x.data.mean(axis=axis))
    inv = 1.0 / count

    def backward(gy):
        if axis is None:
            g = np.broadcast_to(gy * inv, x.shape)
        else:
            g = np.broadcast_to(np.expand_dims(gy, axis) * inv, x.shape)
        return (g.astype(x.data.dtype, copy=False),)

    return _trace(out, (x,), backward)


# ---------------------------------------------------------------------------
# Indexing and shape


def gather(x, idx, axis=0):
    """Select rows of a 2D tensor: out[j] = x[idx[j]]."""
    if axis != 0 or x.ndim != 2:
        raise ShapeError(f"gather: only axis=0 over 2D supported, got {x.shape}")
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.data[idx])

    def backward(gy):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, gy)
        return (gx,)

    return _trace(out, (x,), backward)


def reshape(x, shape):
    out = Tensor(x.data.reshape(shape))
    return _trace(out, (x,), lambda gy: (gy.reshape(x.shape),))


def transpose(x, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(np.transpose(x.data, axes))
    return _trace(out, (x,), lambda gy: (np.transpose(gy, inv),))


def concat(tensors, axis):
    tensors = tuple(tensors)
    for t in tensors[1:]:
        _check_same_dtype("concat", tensors[0], t)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(gy):
        return tuple(np.split(gy, bounds, axis=axis))

    return _trace(out, tensors, backward)


# ---------------------------------------------------------------------------
# 1D convolutions


def _out_len(L, K, stride, pad):
    return (L + 2 * pad - K) // stride + 1


def conv1d(x, w, b=None, stride=1, pad=0):
    """Cross-correlation of x (B,Cin,L) with w (Cout,Cin,K) plus bias (Cout,)."""
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} and kernel {w.shape} do not conform")
    _check_same_dtype("conv1d", x, w)
    B, Cin, L = x.shape
    Cout, _, K = w.shape
    Lout = _out_len(L, K, stride, pad)
    if Lout < 1:
        raise ShapeError(f"conv1d: kernel {w.shape} too large for input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad))) if pad else x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, K, axis=2)[:, :, ::stride]
    y = np.tensordot(win, w.data, axes=([1, 3], [1, 2]))  # (B, Lout, Cout)
    y = np.ascontiguousarray(y.transpose(0, 2, 1))
    if b is not None:
        if b.shape != (Cout,):
            raise ShapeError(f"conv1d: bias {b.shape} does not fit {Cout} channels")
        y = y + b.data[None, :, None]
    out = Tensor(y)

    def backward(gy):
        gw = np.tensordot(gy, win, axes=([0, 2], [0, 2]))  # (Cout, Cin, K)
        gxp = np.zeros_like(xp)
        offs = stride * np.arange(Lout)
        for k in range(K):
            contrib = np.tensordot(gy, w.data[:, :, k], axes=([1], [0]))  # (B, Lout, Cin)
            gxp[:, :, offs + k] += contrib.transpose(0, 2, 1)
        gx = gxp[:, :, pad : pad + L] if pad else gxp
        if b is None:
            return gx, gw
        return gx, gw, gy.sum(axis=(0, 2))

    inputs = (x, w) if b is None else (x, w, b)
    return _trace(out, inputs, backward)


def conv1d_transpose(x, w, b=None, stride=1, pad=0):
    """Transposed conv of x (B,Cin,L) with w (Cin,Cout,K); output length
    (L-1)*stride - 2*pad + K."""
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"conv1d_transpose: input {x.shape} and kernel {w.shape} do not conform"
        )
    _check_same_dtype("conv1d_transpose", x, w)
    B, Cin, L = x.shape
    _, Cout, K = w.shape
    Lfull = (L - 1) * stride + K
    Lout = Lfull - 2 * pad
    if Lout < 1:
        raise ShapeError(f"conv1d_transpose: output collapses for input {x.shape}")
    yfull = np.zeros((B, Cout, Lfull), dtype=x.data.dtype)
    offs = stride * np.arange(L)
    for k in range(K):
        contrib = np.tensordot(x.data, w.data[:, :, k], axes=([1], [0]))  # (B, L, Cout)
        yfull[:, :, offs + k] += contrib.transpose(0, 2, 1)
    y = yfull[:, :, pad : pad + Lout].copy()
    if b is not None:
        if b.shape != (Cout,):
            raise ShapeError(f"conv1d_transpose: bias {b.shape} does not fit {Cout} channels")
        y = y + b.data[None, :, None]
    out = Tensor(y)

    def backward(gy):
        gyfull = np.zeros((B, Cout, Lfull), dtype=gy.dtype)
        gyfull[:, :, pad : pad + Lout] = gy
        gwin = np.lib.stride_tricks.sliding_window_view(gyfull, K, axis=2)[:, :, ::stride]
        gx = np.tensordot(gwin, w.data, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
        gw = np.tensordot(gwin, x.data, axes=([0, 2], [0, 2]))  # (Cout, K, Cin) -> permute
        gw = gw.transpose(2, 0, 1)
        if b is None:
            return np.ascontiguousarray(gx), gw
        return np.ascontiguousarray(gx), gw, gy.sum(axis=(0, 2))

    inputs = (x, w) if b is None else (x, w, b)
    return _trace(out, inputs, backward)
