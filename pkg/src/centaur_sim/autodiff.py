"""A small reverse-mode automatic differentiation engine over numpy arrays.

Each ``Tensor`` records the op that produced it and a closure that pushes the
incoming gradient to its parents. ``Tensor.backward`` walks the graph in
reverse topological order. Graph edges are only recorded when some input
requires a gradient, so plain inference pays no bookkeeping.
"""

from __future__ import annotations

import numpy as np
from scipy import special


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        parents = tuple(p for p in parents if isinstance(p, Tensor))
        if any(p.requires_grad for p in parents):
            return Tensor(data, True, parents, backward)
        return Tensor(data)

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        g = _unbroadcast(np.asarray(g, dtype=np.float64), self.data.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf."""
        order, seen = [], set()

        def visit(node):
            stack = [(node, False)]
            while stack:
                n, done = stack.pop()
                if done:
                    order.append(n)
                    continue
                if id(n) in seen:
                    continue
                seen.add(id(n))
                stack.append((n, True))
                for p in n._parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        for n in order:
            if n._parents:
                n.grad = None
        self.grad = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)
        for n in reversed(order):
            if n._backward is not None and n.grad is not None:
                n._backward(n.grad)

    # -- elementwise arithmetic --------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)

        def bw(g):
            self._accumulate(g)
            other._accumulate(g)

        return Tensor._make(self.data + other.data, (self, other), bw)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: self._accumulate(-g))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)

        def bw(g):
            self._accumulate(g * other.data)
            other._accumulate(g * self.data)

        return Tensor._make(self.data * other.data, (self, other), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = self.data / other.data

        def bw(g):
            self._accumulate(g / other.data)
            other._accumulate(-g * out / other.data)

        return Tensor._make(out, (self, other), bw)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        out = self.data**exponent

        def bw(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))

        return Tensor._make(out, (self,), bw)

    def __matmul__(self, other):
        other = as_tensor(other)

        def bw(g):
            # promote 1-D operands to matrices as numpy does, then drop the extra axis
            a = self.data[None, :] if self.data.ndim == 1 else self.data
            b = other.data[:, None] if other.data.ndim == 1 else other.data
            gm = np.reshape(g, np.broadcast_shapes(a.shape[:-2], b.shape[:-2]) + (a.shape[-2], b.shape[-1]))
            if self.requires_grad:
                ga = gm @ np.swapaxes(b, -1, -2)
                self._accumulate(ga.reshape(ga.shape[:-2] + ga.shape[-1:]) if self.data.ndim == 1 else ga)
            if other.requires_grad:
                gb = np.swapaxes(a, -1, -2) @ gm
                other._accumulate(gb[..., 0] if other.data.ndim == 1 else gb)

        return Tensor._make(self.data @ other.data, (self, other), bw)

    def __getitem__(self, idx):
        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accumulate(full)

        return Tensor._make(self.data[idx], (self,), bw)

    # -- reductions and shape ----------------------------------------------

    def sum(self, axis=None, keepdims=False):
        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape))

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), bw)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        return Tensor._make(
            self.data.reshape(*shape), (self,), lambda g: self._accumulate(g.reshape(self.data.shape))
        )

    @property
    def T(self):
        return Tensor._make(self.data.T, (self,), lambda g: self._accumulate(g.T))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unary(x: Tensor, out: np.ndarray, local_grad) -> Tensor:
    return Tensor._make(out, (x,), lambda g: x._accumulate(g * local_grad()))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _unary(x, out, lambda: out)


def log(x: Tensor) -> Tensor:
    return _unary(x, np.log(x.data), lambda: 1.0 / x.data)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _unary(x, out, lambda: 1.0 - out**2)


def sigmoid(x: Tensor) -> Tensor:
    out = special.expit(x.data)
    return _unary(x, out, lambda: out * (1.0 - out))


def softplus(x: Tensor) -> Tensor:
    return _unary(x, np.logaddexp(0.0, x.data), lambda: special.expit(x.data))


def abs_(x: Tensor) -> Tensor:
    return _unary(x, np.abs(x.data), lambda: np.sign(x.data))


def lgamma(x: Tensor) -> Tensor:
    return _unary(x, special.gammaln(x.data), lambda: special.digamma(x.data))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp; the gradient is zero where the bound is active."""
    return _unary(x, np.clip(x.data, lo, hi), lambda: ((x.data >= lo) & (x.data <= hi)).astype(np.float64))


def maximum(x: Tensor, floor: float) -> Tensor:
    return _unary(x, np.maximum(x.data, floor), lambda: (x.data >= floor).astype(np.float64))


def logsumexp(x: Tensor, axis=-1, keepdims=False) -> Tensor:
    out = special.logsumexp(x.data, axis=axis, keepdims=True)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(g * np.exp(x.data - out))

    value = out if keepdims else np.squeeze(out, axis=axis)
    return Tensor._make(value, (x,), bw)


def log_softmax(x: Tensor, axis=-1) -> Tensor:
    return x - logsumexp(x, axis=axis, keepdims=True)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(part)

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)
