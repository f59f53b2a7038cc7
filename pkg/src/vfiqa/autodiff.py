"""Reverse-mode automatic differentiation over dense numpy arrays.

Every differentiable op returns a Tensor that records its parent tensors
and a closure mapping the output gradient to parent gradients. Calling
``backward`` on a scalar walks those records in reverse topological order
(inputs always precede the ops that consume them), accumulates ``grad``
on every tensor that requires it, and clears the records as it goes, so
a tape is consumed by exactly one backward pass.

Float32 is the working precision; float64 is supported everywhere for
verification runs. Ops never mix precisions silently.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """An operand's shape violates the contract of the op that got it."""


class ConfigError(ValueError):
    """A configuration value is internally inconsistent."""


class _GradMode(threading.local):
    def __init__(self):
        self.enabled = True


_GRAD_MODE = _GradMode()


class no_grad:
    """Context manager: ops executed inside are not recorded for backward."""

    def __enter__(self):
        self._saved = _GRAD_MODE.enabled
        _GRAD_MODE.enabled = False
        return self

    def __exit__(self, *exc):
        _GRAD_MODE.enabled = self._saved
        return False


def grad_enabled() -> bool:
    return _GRAD_MODE.enabled


class Tensor:
    """Dense N-d float array, optionally participating in the gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = np.ascontiguousarray(arr, dtype=dtype)
        elif arr.dtype not in FLOAT_DTYPES:
            arr = np.ascontiguousarray(arr, dtype=DEFAULT_DTYPE)
        else:
            arr = np.ascontiguousarray(arr)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else _scalar_err(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return cast(self, dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # ---- convenience arithmetic -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def _scalar_err(t):
    raise ShapeError(f"expected a scalar tensor, got shape {t.shape}")


def _coerce(x, like: Tensor) -> Tensor:
    """Wrap a python scalar / ndarray as a constant Tensor in ``like``'s dtype."""
    if isinstance(x, Tensor):
        if x.dtype != like.dtype:
            raise ShapeError(f"dtype mismatch: {x.dtype} vs {like.dtype}")
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _binary_args(a, b):
    if isinstance(a, Tensor):
        b = _coerce(b, a)
    elif isinstance(b, Tensor):
        a = _coerce(a, b)
    else:
        raise TypeError("at least one operand must be a Tensor")
    return a, b


def _from_op(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn) -> Tensor:
    out = Tensor(data)
    if _GRAD_MODE.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    ``loss`` must be a scalar on the tape. The tape records are released
    as they are consumed.
    """
    if loss.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not require grad; nothing to backpropagate")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        fn = node._grad_fn
        if fn is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, fn(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            if g.dtype != parent.data.dtype:
                g = g.astype(parent.data.dtype)
            parent.grad = g if parent.grad is None else parent.grad + g
        node._parents = ()
        node._grad_fn = None


# ---- elementwise ops ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _binary_args(a, b)
    data = a.data + b.data

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _from_op(data, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = _binary_args(a, b)
    data = a.data - b.data

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _from_op(data, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = _binary_args(a, b)
    data = a.data * b.data

    def grad_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _from_op(data, (a, b), grad_fn)


def div(a, b) -> Tensor:
    a, b = _binary_args(a, b)
    data = a.data / b.data

    def grad_fn(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _from_op(data, (a, b), grad_fn)


def neg(a: Tensor) -> Tensor:
    return _from_op(-a.data, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    return _from_op(a.data * a.data, (a,), lambda g: (g * (2.0 * a.data),))


def sqrt(a: Tensor) -> Tensor:
    root = np.sqrt(a.data)

    def grad_fn(g):
        return (g / (2.0 * root),)

    return _from_op(root, (a,), grad_fn)


def absolute(a: Tensor) -> Tensor:
    return _from_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    return _from_op(e, (a,), lambda g: (g * e,))


def log(a: Tensor) -> Tensor:
    return _from_op(np.log(a.data), (a,), lambda g: (g / a.data,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)

    def grad_fn(g):
        return (g * s * (1.0 - s),)

    return _from_op(s, (a,), grad_fn)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _from_op(t, (a,), lambda g: (g * (1.0 - t * t),))


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    x = a.data
    data = np.where(x > 0, x, x * slope)

    def grad_fn(g):
        return (g * np.where(x > 0, 1.0, slope).astype(x.dtype),)

    return _from_op(data, (a,), grad_fn)


_GELU_K = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """Smooth gelu (tanh form)."""
    x = a.data
    u = _GELU_K * (x + _GELU_A * x**3)
    t = np.tanh(u)
    data = 0.5 * x * (1.0 + t)

    def grad_fn(g):
        du = _GELU_K * (1.0 + 3.0 * _GELU_A * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du),)

    return _from_op(data, (a,), grad_fn)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    data = np.clip(a.data, lo, hi)
    inside = ((a.data >= lo) & (a.data <= hi)).astype(a.dtype)

    def grad_fn(g):
        return (g * inside,)

    return _from_op(data, (a,), grad_fn)


def cast(a: Tensor, dtype) -> Tensor:
    dtype = np.dtype(dtype)
    if dtype not in FLOAT_DTYPES:
        raise ConfigError(f"unsupported dtype {dtype}")
    src = a.dtype
    return _from_op(a.data.astype(dtype), (a,), lambda g: (g.astype(src),))


# ---- reductions and shape ops ----------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _from_op(data, (a,), grad_fn)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))

    def grad_fn(g):
        g = g / count
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _from_op(data, (a,), grad_fn)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    data = a.data.reshape(shape)
    return _from_op(data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    data = a.data.transpose(axes)
    return _from_op(data, (a,), lambda g: (g.transpose(inv),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    dtype = tensors[0].dtype
    for t in tensors:
        if t.dtype != dtype:
            raise ShapeError("concat operands must share a dtype")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _from_op(data, tuple(tensors), grad_fn)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries from ``start`` along ``axis``."""
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = a.data[idx]

    def grad_fn(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return _from_op(data, (a,), grad_fn)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return _from_op(s, (a,), grad_fn)


def roll2d(a: Tensor, shift_h: int, shift_w: int) -> Tensor:
    """Cyclic shift along the two trailing (spatial) axes."""
    data = np.roll(a.data, (shift_h, shift_w), axis=(-2, -1))

    def grad_fn(g):
        return (np.roll(g, (-shift_h, -shift_w), axis=(-2, -1)),)

    return _from_op(data, (a,), grad_fn)


def _reflect_indices(n: int, pad: int) -> np.ndarray:
    """Source indices for right-side reflect padding of a length-n axis."""
    idx = np.empty(n + pad, dtype=np.intp)
    idx[:n] = np.arange(n)
    if n == 1:
        idx[n:] = 0
        return idx
    period = 2 * n - 2
    for k in range(pad):
        r = (n + k) % period
        idx[n + k] = r if r < n else period - r
    return idx


def _gather_axis(a: Tensor, axis: int, idx: np.ndarray) -> Tensor:
    sel = [slice(None)] * a.ndim
    sel[axis] = idx
    sel = tuple(sel)
    data = a.data[sel]

    def grad_fn(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        np.add.at(full, sel, g)
        return (full,)

    return _from_op(data, (a,), grad_fn)


def reflect_pad2d(a: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Reflect-pad the bottom/right of the two trailing axes."""
    out = a
    if pad_h > 0:
        out = _gather_axis(out, -2, _reflect_indices(a.shape[-2], pad_h))
    if pad_w > 0:
        out = _gather_axis(out, -1, _reflect_indices(a.shape[-1], pad_w))
    return out


def crop2d(a: Tensor, height: int, width: int) -> Tensor:
    """Keep the top-left height x width corner of the trailing axes."""
    data = a.data[..., :height, :width]

    def grad_fn(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[..., :height, :width] = g
        return (full,)

    return _from_op(data, (a,), grad_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if not isinstance(a, Tensor) or not isinstance(b, Tensor):
        raise TypeError("matmul expects Tensors")
    if a.dtype != b.dtype:
        raise ShapeError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have rank >= 2")
    data = np.matmul(a.data, b.data)

    def grad_fn(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _from_op(data, (a, b), grad_fn)


def stack_scalars(tensors: Sequence[Tensor]) -> Tensor:
    """Stack scalar tensors into a rank-1 tensor (keeps gradients)."""
    if not tensors:
        raise ShapeError("stack of an empty sequence")
    return concat([reshape(t, (1,)) for t in tensors], axis=0)
