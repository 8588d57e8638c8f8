"""Minimal reverse-mode differentiation tape over numpy arrays.

Nodes carry array values; the tape records them in construction order, which
is already a topological order, so one reverse sweep fills every adjoint.
Supported primitives: +, -, *, / (with broadcasting), log, exp, tanh,
sigmoid, sqrt, min/max against a constant, matmul, batched matrix-vector
products against a constant operator, axis sums and means, and constant
concatenation.  Min/max propagate through the selected branch only, ties
taking the identity branch.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tape:
    """Records Vars in creation order and replays them backwards."""

    def __init__(self):
        self.nodes = []
        self.cap_margins = []   # min |x - c| seen at each min/max node

    def var(self, value, requires_grad: bool = True) -> "Var":
        return Var(self, np.asarray(value, dtype=float), (), None,
                   requires_grad=requires_grad)

    def backward(self, node: "Var") -> None:
        if node.value.size != 1:
            raise ValueError("backward root must be scalar")
        for n in self.nodes:
            n.grad = None
        node.grad = np.ones_like(node.value)
        for n in reversed(self.nodes):
            if n.grad is not None and n._backward is not None:
                n._backward(n.grad)

    def min_cap_margin(self) -> float:
        """Smallest distance of any clamp input to its threshold in the last
        forward pass; used to reject gradient checks near kinks."""
        return min(self.cap_margins, default=np.inf)


class Var:
    __slots__ = ("tape", "value", "parents", "_backward", "grad", "requires_grad")

    # keep numpy from consuming Vars elementwise; binary ops with ndarrays
    # then dispatch to the reflected methods below
    __array_ufunc__ = None

    def __init__(self, tape, value, parents, backward, requires_grad=True):
        self.tape = tape
        self.value = value
        self.parents = parents
        self._backward = backward
        self.grad = None
        self.requires_grad = requires_grad
        tape.nodes.append(self)

    def _accumulate(self, grad):
        self.grad = grad if self.grad is None else self.grad + grad

    # -- elementwise arithmetic ------------------------------------------

    def __add__(self, other):
        return _binary(self, other, np.add,
                       lambda g, a, b: g, lambda g, a, b: g)

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract,
                       lambda g, a, b: g, lambda g, a, b: -g)

    def __rsub__(self, other):
        return _binary(self, other, lambda a, b: b - a,
                       lambda g, a, b: -g, lambda g, a, b: g)

    def __mul__(self, other):
        return _binary(self, other, np.multiply,
                       lambda g, a, b: g * b, lambda g, a, b: g * a)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, np.divide,
                       lambda g, a, b: g / b, lambda g, a, b: -g * a / (b * b))

    def __rtruediv__(self, other):
        return _binary(self, other, lambda a, b: b / a,
                       lambda g, a, b: -g * b / (a * a), lambda g, a, b: g / a)

    def __neg__(self):
        return _unary(self, np.negative, lambda g, x, y: -g)

    # -- reductions ------------------------------------------------------

    def sum(self, axis=None):
        x = self

        def bwd(grad):
            g = grad
            if axis is not None:
                g = np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g, x.value.shape).copy())

        return Var(x.tape, np.sum(x.value, axis=axis), (x,),
                   lambda grad: bwd(grad))

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)


def _value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _binary(a, b, fwd, da, db):
    av, bv = _value(a), _value(b)
    tape = a.tape if isinstance(a, Var) else b.tape
    out_val = fwd(av, bv)

    def bwd(grad):
        if isinstance(a, Var):
            a._accumulate(_unbroadcast(da(grad, av, bv), av.shape))
        if isinstance(b, Var):
            b._accumulate(_unbroadcast(db(grad, av, bv), bv.shape))

    parents = tuple(x for x in (a, b) if isinstance(x, Var))
    return Var(tape, out_val, parents, bwd)


def _unary(x, fwd, dx):
    out_val = fwd(x.value)

    def bwd(grad):
        x._accumulate(dx(grad, x.value, out_val))

    return Var(x.tape, out_val, (x,), bwd)


def log(x: Var) -> Var:
    return _unary(x, np.log, lambda g, v, y: g / v)


def exp(x: Var) -> Var:
    return _unary(x, np.exp, lambda g, v, y: g * y)


def sqrt(x: Var) -> Var:
    return _unary(x, np.sqrt, lambda g, v, y: g / (2.0 * y))


def tanh(x: Var) -> Var:
    return _unary(x, np.tanh, lambda g, v, y: g * (1.0 - y * y))


def sigmoid(x: Var) -> Var:
    def fwd(v):
        out = np.empty_like(v)
        pos = v >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        out[~pos] = ev / (1.0 + ev)
        return out

    return _unary(x, fwd, lambda g, v, y: g * y * (1.0 - y))


def minimum_const(x: Var, c: float) -> Var:
    """min(x, c); gradient flows where x <= c (ties take the x branch)."""
    mask = x.value <= c
    x.tape.cap_margins.append(float(np.min(np.abs(x.value - c))))

    def bwd(grad):
        x._accumulate(grad * mask)

    return Var(x.tape, np.minimum(x.value, c), (x,), bwd)


def maximum_const(x: Var, c: float) -> Var:
    """max(x, c); gradient flows where x >= c (ties take the x branch)."""
    mask = x.value >= c
    x.tape.cap_margins.append(float(np.min(np.abs(x.value - c))))

    def bwd(grad):
        x._accumulate(grad * mask)

    return Var(x.tape, np.maximum(x.value, c), (x,), bwd)


def matmul(x: Var, w: Var) -> Var:
    """(B, n) @ (n, m) with both operands differentiable."""
    xv, wv = _value(x), _value(w)
    out_val = xv @ wv

    def bwd(grad):
        if isinstance(x, Var):
            x._accumulate(grad @ wv.T)
        if isinstance(w, Var):
            w._accumulate(xv.T @ grad)

    tape = x.tape if isinstance(x, Var) else w.tape
    parents = tuple(v for v in (x, w) if isinstance(v, Var))
    return Var(tape, out_val, parents, bwd)


def bmatvec(A: np.ndarray, x: Var) -> Var:
    """Batched matrix-vector product y[b] = A[b] @ x[b] against a constant
    stack of operators A with shape (B, m, n); x has shape (B, n)."""
    A = np.asarray(A, dtype=float)
    out_val = np.einsum("bmn,bn->bm", A, x.value)

    def bwd(grad):
        x._accumulate(np.einsum("bmn,bm->bn", A, grad))

    return Var(x.tape, out_val, (x,), bwd)


def concat_const(x: Var, const: np.ndarray) -> Var:
    """Concatenate a constant block to the right of x along axis 1."""
    const = np.asarray(const, dtype=float)
    n = x.value.shape[1]
    out_val = np.concatenate([x.value, const], axis=1)

    def bwd(grad):
        x._accumulate(grad[:, :n])

    return Var(x.tape, out_val, (x,), bwd)
