"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward()
walks the tape in reverse topological order and accumulates gradients into
every tensor created with requires_grad=True. Only the operations the graph
encoder needs are implemented.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, grad={'yes' if self.requires_grad else 'no'})"

    # -- graph construction helpers ------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def _make(self, value, parents, backward) -> "Tensor":
        needs = any(p.requires_grad or p._parents for p in parents)
        if not needs:
            return Tensor(value)
        return Tensor(value, parents=parents, backward=backward)

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = self._lift(other)
        out_val = self.value + other.value

        def bw(g):
            return (_unbroadcast(g, self.value.shape), _unbroadcast(g, other.value.shape))

        return self._make(out_val, (self, other), bw)

    __radd__ = __add__

    def __neg__(self):
        return self._make(-self.value, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        out_val = self.value * other.value

        def bw(g):
            return (
                _unbroadcast(g * other.value, self.value.shape),
                _unbroadcast(g * self.value, other.value.shape),
            )

        return self._make(out_val, (self, other), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * self._lift(other).reciprocal()

    def __matmul__(self, other):
        other = self._lift(other)
        a, b = self.value, other.value
        out_val = a @ b

        def bw(g):
            if a.ndim == 1 and b.ndim == 2:
                return (g @ b.T, np.outer(a, g))
            if a.ndim == 2 and b.ndim == 1:
                return (np.outer(g, b), a.T @ g)
            if a.ndim == 1 and b.ndim == 1:
                return (g * b, g * a)
            return (g @ b.T, a.T @ g)

        return self._make(out_val, (self, other), bw)

    # -- elementwise nonlinearities ---------------------------------------

    def reciprocal(self):
        out_val = 1.0 / self.value
        return self._make(out_val, (self,), lambda g: (-g * out_val * out_val,))

    def relu(self):
        mask = self.value > 0
        return self._make(self.value * mask, (self,), lambda g: (g * mask,))

    def sigmoid(self):
        v = self.value
        out_val = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
        return self._make(out_val, (self,), lambda g: (g * out_val * (1 - out_val),))

    def exp(self):
        out_val = np.exp(self.value)
        return self._make(out_val, (self,), lambda g: (g * out_val,))

    def log(self):
        return self._make(np.log(self.value), (self,), lambda g: (g / self.value,))

    def sqrt(self):
        out_val = np.sqrt(self.value)
        return self._make(out_val, (self,), lambda g: (g * 0.5 / out_val,))

    def clip(self, lo: float, hi: float):
        mask = (self.value > lo) & (self.value < hi)
        return self._make(np.clip(self.value, lo, hi), (self,), lambda g: (g * mask,))

    # -- shape ops ---------------------------------------------------------

    @property
    def T(self):
        return self._make(self.value.T, (self,), lambda g: (g.T,))

    def sum(self, axis=None, keepdims=False):
        out_val = self.value.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.value.shape).copy(),)

        return self._make(out_val, (self,), bw)

    def mean(self, axis=None, keepdims=False):
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    @staticmethod
    def concat(parts: list["Tensor"], axis: int = 1) -> "Tensor":
        parts = [Tensor._lift(p) for p in parts]
        out_val = np.concatenate([p.value for p in parts], axis=axis)
        sizes = [p.value.shape[axis] for p in parts]

        def bw(g):
            return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))

        needs = any(p.requires_grad or p._parents for p in parts)
        if not needs:
            return Tensor(out_val)
        return Tensor(out_val, parents=tuple(parts), backward=bw)

    # -- backward pass -----------------------------------------------------

    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward() expects a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.value)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not (parent.requires_grad or parent._parents):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def param(value: np.ndarray) -> Tensor:
    return Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)


def const(value) -> Tensor:
    return Tensor(value)
