"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and records the operation that produced it;
``backward()`` walks the graph in reverse topological order accumulating
gradients into every tensor created with ``requires_grad=True``. The op
set is exactly what the encoder and its losses need — nothing more.

Dtype policy: operations follow numpy promotion, so a graph built from
float32 parameters stays float32 (training) and one built from float64
parameters stays float64 (gradient audits). ``astype`` casts explicitly
where a graph mixes the two.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    # -- bookkeeping ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            if isinstance(g, np.ndarray) and g.shape == self.data.shape:
                self.grad = g.astype(self.data.dtype, copy=True)
            else:
                self.grad = np.zeros_like(self.data)
                self.grad += g
        else:
            self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        topo: list[Tensor] = []
        state: dict[int, int] = {}  # id -> 0 discovered, 1 finished
        stack: list[Tensor] = [self]
        while stack:
            node = stack.pop()
            flag = state.get(id(node))
            if flag == 1:
                continue
            if flag == 0:
                state[id(node)] = 1
                topo.append(node)
                continue
            state[id(node)] = 0
            stack.append(node)
            for p in node._parents:
                if p.requires_grad and id(p) not in state:
                    stack.append(p)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, other)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, neg(other))
        return add_scalar(self, -other)

    def __rsub__(self, other):
        return add_scalar(neg(self), other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return mul_scalar(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul_scalar(self, 1.0 / other)

    def __rtruediv__(self, other):
        return mul_scalar(power(self, -1.0), other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def astype(self, dtype):
        return astype(self, dtype)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(data, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(data, parents=parents, backward=backward)
    return Tensor(data)


# -- arithmetic -----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape).astype(a.dtype, copy=False))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape).astype(b.dtype, copy=False))

    return _make(out_data, (a, b), backward)


def add_scalar(a: Tensor, c) -> Tensor:
    def backward(g):
        a._accumulate(g)

    return _make(a.data + c, (a,), backward)


def mul_scalar(a: Tensor, c) -> Tensor:
    def backward(g):
        a._accumulate(g * c)

    return _make(a.data * c, (a,), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape).astype(a.dtype, copy=False))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape).astype(b.dtype, copy=False))

    return _make(out_data, (a, b), backward)


def power(a: Tensor, p: float) -> Tensor:
    out_data = a.data**p

    def backward(g):
        a._accumulate(g * p * a.data ** (p - 1.0))

    return _make(out_data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return _make(out_data, (a, b), backward)


# -- shape ----------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape

    def backward(g):
        a._accumulate(g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    def backward(g):
        a._accumulate(np.transpose(g, np.argsort(axes)) if axes else np.transpose(g))

    return _make(np.transpose(a.data, axes), (a,), backward)


def take(a: Tensor, key) -> Tensor:
    """Numpy indexing with gradient scatter-add back into ``a``."""

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, key, g)

    return _make(a.data[key], (a,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: output shape ids.shape + (d,)."""
    ids = np.asarray(ids)

    def backward(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(
            table.grad, ids.reshape(-1), g.reshape(-1, table.shape[-1])
        )

    return _make(table.data[ids], (table,), backward)


# -- reductions -----------------------------------------------------------


def _expand_reduced(g, axis, keepdims, shape):
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    if not keepdims:
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    def backward(g):
        a._accumulate(_expand_reduced(g, axis, keepdims, a.shape))

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = 1
        for ax in axes:
            count *= a.shape[ax]

    def backward(g):
        a._accumulate(_expand_reduced(g, axis, keepdims, a.shape) / count)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward)


# -- nonlinearities ---------------------------------------------------------


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - y * y))

    return _make(y, (a,), backward)


_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit (tanh approximation)."""
    x = a.data
    x2 = x * x
    inner = x * (_GELU_C + (_GELU_C * _GELU_A) * x2)
    t = np.tanh(inner)
    y = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C + (3.0 * _GELU_C * _GELU_A) * x2
        dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        a._accumulate(g * dy)

    return _make(y, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g / (2.0 * y))

    return _make(y, (a,), backward)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def backward(g):
        a._accumulate(g * y)

    return _make(y, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        a._accumulate(y * (g - inner))

    return _make(y, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def backward(g):
        a._accumulate(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return _make(y, (a,), backward)


def astype(a: Tensor, dtype) -> Tensor:
    def backward(g):
        a._accumulate(g.astype(a.dtype))

    return _make(a.data.astype(dtype), (a,), backward)


def log1p_exp(a: Tensor) -> Tensor:
    """Softplus log(1 + e^x), computed stably for large |x|."""
    y = np.logaddexp(np.zeros((), dtype=a.dtype), a.data)

    def backward(g):
        e = np.exp(-np.abs(a.data))
        sig = np.where(a.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        a._accumulate(g * sig)

    return _make(y.astype(a.dtype, copy=False), (a,), backward)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the first axis."""
    split = a.data.shape[0]

    def backward(g):
        a._accumulate(g[:split])
        b._accumulate(g[split:])

    return _make(np.concatenate([a.data, b.data], axis=0), (a, b), backward)
