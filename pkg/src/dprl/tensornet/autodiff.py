"""Tiny reverse-mode autodiff over numpy arrays.

A ``Var`` wraps an ndarray and records how it was produced. Calling
``backward()`` on a scalar ``Var`` accumulates ``.grad`` on every leaf that
was created with ``requires_grad=True``.

Arithmetic works transparently between ``Var`` and plain arrays/scalars, and
ops on constants fall back to plain numpy so the same code path serves both
no-grad sampling and differentiable objectives.
"""
from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, value, requires_grad=False, _parents=(), _backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var({self.value!r}, requires_grad={self.requires_grad})"

    def backward(self, grad=None):
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.value)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def value(x):
    """Underlying array of a Var, or the argument itself."""
    return x.value if isinstance(x, Var) else x


def tracked(x):
    return isinstance(x, Var) and (x.requires_grad or x._backward is not None)


def _node(val, parents, backward):
    live = tuple(p for p in parents if tracked(p))
    if not live:
        return val
    mask = [tracked(p) for p in parents]

    def bw(g):
        gs = backward(g)
        return [gi for gi, m in zip(gs, mask) if m]

    return Var(val, _parents=live, _backward=bw)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _shape(x):
    return np.shape(value(x))


def add(a, b):
    av, bv = value(a), value(b)
    sa, sb = _shape(a), _shape(b)
    return _node(av + bv, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    av, bv = value(a), value(b)
    sa, sb = _shape(a), _shape(b)
    return _node(av - bv, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    av, bv = value(a), value(b)
    sa, sb = _shape(a), _shape(b)
    return _node(av * bv, (a, b), lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)))


def div(a, b):
    av, bv = value(a), value(b)
    sa, sb = _shape(a), _shape(b)
    out = av / bv
    return _node(out, (a, b), lambda g: (_unbroadcast(g / bv, sa), _unbroadcast(-g * out / bv, sb)))


def power(a, p):
    av = value(a)
    return _node(av**p, (a,), lambda g: (g * p * av ** (p - 1),))


def matmul(a, b):
    av, bv = value(a), value(b)

    def bw(g):
        ga = g @ np.swapaxes(bv, -1, -2) if bv.ndim > 1 else np.multiply.outer(g, bv)
        gb = np.swapaxes(av, -1, -2) @ g if av.ndim > 1 else np.multiply.outer(av, g)
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _node(av @ bv, (a, b), bw)


def exp(a):
    out = np.exp(value(a))
    return _node(out, (a,), lambda g: (g * out,))


def log(a):
    av = value(a)
    return _node(np.log(av), (a,), lambda g: (g / av,))


def sqrt(a):
    out = np.sqrt(value(a))
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a):
    out = np.tanh(value(a))
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def softplus(a):
    av = value(a)
    out = np.logaddexp(0.0, av)
    return _node(out, (a,), lambda g: (g * _sigmoid(av),))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def square(a):
    av = value(a)
    return _node(av * av, (a,), lambda g: (2.0 * g * av,))


def vsum(a, axis=None, keepdims=False):
    av = value(a)
    shape = av.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(av.sum(axis=axis, keepdims=keepdims), (a,), bw)


def mean(a, axis=None, keepdims=False):
    av = value(a)
    n = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return vsum(a, axis, keepdims) * (1.0 / n)


def minimum(a, b):
    """Elementwise min; ties route the gradient to the first argument."""
    av, bv = value(a), value(b)
    sa, sb = _shape(a), _shape(b)
    pick = av <= bv
    return _node(
        np.where(pick, av, bv),
        (a, b),
        lambda g: (_unbroadcast(g * pick, sa), _unbroadcast(g * ~pick, sb)),
    )


def maximum(a, b):
    av, bv = value(a), value(b)
    sa, sb = _shape(a), _shape(b)
    pick = av >= bv
    return _node(
        np.where(pick, av, bv),
        (a, b),
        lambda g: (_unbroadcast(g * pick, sa), _unbroadcast(g * ~pick, sb)),
    )


def clip(a, lo, hi):
    av = value(a)
    inside = (av >= lo) & (av <= hi)
    return _node(np.clip(av, lo, hi), (a,), lambda g: (g * inside,))


def where(cond, a, b):
    av, bv = value(a), value(b)
    sa, sb = _shape(a), _shape(b)
    return _node(
        np.where(cond, av, bv),
        (a, b),
        lambda g: (_unbroadcast(np.where(cond, g, 0.0), sa), _unbroadcast(np.where(cond, 0.0, g), sb)),
    )


def getitem(a, idx):
    av = value(a)

    def bw(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return (out,)

    return _node(av[idx], (a,), bw)


def reshape(a, shape):
    av = value(a)
    return _node(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def concat(parts, axis=-1):
    vals = [np.asarray(value(p), dtype=np.float64) for p in parts]
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def bw(g):
        return np.split(g, sizes, axis=axis)

    return _node(np.concatenate(vals, axis=axis), tuple(parts), bw)


def logsumexp(a, axis=-1, keepdims=False):
    av = value(a)
    m = av.max(axis=axis, keepdims=True)
    ex = np.exp(av - m)
    s = ex.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    soft = ex / s

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return _node(out if keepdims else np.squeeze(out, axis), (a,), bw)


def stop_gradient(a):
    return value(a)
