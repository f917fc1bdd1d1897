"""Reverse-mode autodiff over numpy arrays.

Float32 throughout by default (gradients included); float64 is available
for finite-difference checks. The graph is taped per forward pass; a
`no_grad` context skips tape construction entirely for inference.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={'set' if self.grad is not None else 'none'})"

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        topo = []
        seen = set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for t in reversed(topo):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    # operator sugar used in a few places
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, like: Tensor | None = None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def sub(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(-_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(g @ b.data.T)
        if b.requires_grad or b._parents:
            b._accumulate(a.data.T @ g)

    return _make(data, (a, b), backward)


def silu(x):
    x = _as_tensor(x)
    sig = 1.0 / (1.0 + np.exp(-x.data))
    data = x.data * sig

    def backward(g):
        if x.requires_grad or x._parents:
            x._accumulate(g * (sig * (1.0 + x.data * (1.0 - sig))))

    return _make(data, (x,), backward)


def square(x):
    x = _as_tensor(x)
    data = x.data * x.data

    def backward(g):
        if x.requires_grad or x._parents:
            x._accumulate(g * 2.0 * x.data)

    return _make(data, (x,), backward)


def mean(x):
    x = _as_tensor(x)
    data = x.data.mean()

    def backward(g):
        if x.requires_grad or x._parents:
            x._accumulate(np.full_like(x.data, g / x.data.size))

    return _make(data, (x,), backward)


def sum_(x):
    x = _as_tensor(x)
    data = x.data.sum()

    def backward(g):
        if x.requires_grad or x._parents:
            x._accumulate(np.full_like(x.data, g))

    return _make(data, (x,), backward)


def concat(tensors, axis=1):
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        off = 0
        for t, s in zip(tensors, sizes):
            if t.requires_grad or t._parents:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(off, off + s)
                t._accumulate(g[tuple(sl)])
            off += s

    return _make(data, tuple(tensors), backward)


def narrow(x, axis, start, length):
    """Contiguous slice along one axis."""
    x = _as_tensor(x)
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    data = x.data[tuple(sl)]

    def backward(g):
        if x.requires_grad or x._parents:
            full = np.zeros_like(x.data)
            full[tuple(sl)] = g
            x._accumulate(full)

    return _make(data, (x,), backward)


def group_norm(x, gamma, beta, group_size: int, eps: float = 1e-5):
    """GroupNorm over the feature axis of a (B, D) tensor.

    Features are split into groups of `group_size` channels; each group is
    normalized per sample, then scaled/shifted per feature.
    """
    x = _as_tensor(x)
    gamma = _as_tensor(gamma, like=x)
    beta = _as_tensor(beta, like=x)
    B, D = x.data.shape
    if D % group_size != 0:
        raise ValueError(f"group size {group_size} does not divide width {D}")
    G = D // group_size
    xg = x.data.reshape(B, G, group_size)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(B, D)
    data = xhat * gamma.data + beta.data

    def backward(g):
        if beta.requires_grad or beta._parents:
            beta._accumulate(g.sum(axis=0))
        if gamma.requires_grad or gamma._parents:
            gamma._accumulate((g * xhat).sum(axis=0))
        if x.requires_grad or x._parents:
            gh = (g * gamma.data).reshape(B, G, group_size)
            xh = xhat.reshape(B, G, group_size)
            n = group_size
            dx = (
                inv
                / n
                * (n * gh - gh.sum(axis=2, keepdims=True) - xh * (gh * xh).sum(axis=2, keepdims=True))
            )
            x._accumulate(dx.reshape(B, D))

    return _make(data, (x, gamma, beta), backward)


def film(features, gamma, beta):
    """Feature-wise affine modulation: gamma * h + beta (broadcast over batch)."""
    return add(mul(features, gamma), beta)
