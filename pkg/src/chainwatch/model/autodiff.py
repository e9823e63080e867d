"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor records the operation that produced it; backward() walks the
tape in reverse topological order and accumulates gradients into every
requires_grad leaf. 64-bit floats throughout. Only the operations the
survival transformer needs are provided; each op's backward closes over
the forward values it needs, so the tape holds no global state.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # keep numpy from swallowing `ndarray <op> Tensor` into an object array
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # ------------------------------------------------------------- autograd

    def backward(self, grad: np.ndarray | None = None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        done: set[int] = set()
        opened: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in done:
                continue
            if expanded:
                done.add(id(node))
                topo.append(node)
                continue
            if id(node) in opened:
                continue
            opened.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in done:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # --------------------------------------------------------- arithmetic

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, parents=(self, other),
                     backward=lambda g: (_unbroadcast(g, self.shape),
                                         _unbroadcast(g, other.shape)))
        return out

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, parents=(self,), backward=lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, parents=(self, other),
                     backward=lambda g: (_unbroadcast(g * other.data, self.shape),
                                         _unbroadcast(g * self.data, other.shape)))
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(
            self.data / other.data, parents=(self, other),
            backward=lambda g: (
                _unbroadcast(g / other.data, self.shape),
                _unbroadcast(-g * self.data / (other.data ** 2), other.shape)))
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)

        def backward(g):
            ga = g @ np.swapaxes(other.data, -1, -2)
            gb = np.swapaxes(self.data, -1, -2) @ g
            return _unbroadcast(ga, self.shape), _unbroadcast(gb, other.shape)

        return Tensor(self.data @ other.data, parents=(self, other), backward=backward)

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # ------------------------------------------------------ element-wise

    def tanh(self):
        value = np.tanh(self.data)
        return Tensor(value, parents=(self,),
                      backward=lambda g: (g * (1.0 - value ** 2),))

    def sigmoid(self):
        value = 1.0 / (1.0 + np.exp(-self.data))
        return Tensor(value, parents=(self,),
                      backward=lambda g: (g * value * (1.0 - value),))

    def exp(self):
        value = np.exp(self.data)
        return Tensor(value, parents=(self,), backward=lambda g: (g * value,))

    def log(self):
        return Tensor(np.log(self.data), parents=(self,),
                      backward=lambda g: (g / self.data,))

    def softplus(self):
        data = self.data
        return Tensor(np.logaddexp(0.0, data), parents=(self,),
                      backward=lambda g: (g / (1.0 + np.exp(-data)),))

    def relu(self):
        mask = self.data > 0.0
        return Tensor(self.data * mask, parents=(self,),
                      backward=lambda g: (g * mask,))

    def clamp_min(self, floor: float):
        mask = self.data > floor
        return Tensor(np.maximum(self.data, floor), parents=(self,),
                      backward=lambda g: (g * mask,))

    # -------------------------------------------------------- reductions

    def sum(self, axis=None, keepdims: bool = False):
        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, self.shape).copy(),)
            g_exp = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g_exp, self.shape).copy(),)

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims),
                      parents=(self,), backward=backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            count = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def cumsum(self, axis: int = -1):
        def backward(g):
            flipped = np.flip(g, axis=axis)
            return (np.flip(np.cumsum(flipped, axis=axis), axis=axis),)

        return Tensor(np.cumsum(self.data, axis=axis), parents=(self,),
                      backward=backward)

    # ------------------------------------------------------------- shape

    def reshape(self, *shape):
        def backward(g):
            return (g.reshape(self.shape),)

        return Tensor(self.data.reshape(*shape), parents=(self,), backward=backward)

    def swapaxes(self, a: int, b: int):
        return Tensor(np.swapaxes(self.data, a, b), parents=(self,),
                      backward=lambda g: (np.swapaxes(g, a, b),))

    def __getitem__(self, key):
        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            return (full,)

        return Tensor(self.data[key], parents=(self,), backward=backward)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        slicer = [slice(None)] * g.ndim
        outs = []
        for i in range(len(tensors)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            outs.append(g[tuple(slicer)])
        return tuple(outs)

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                  parents=tuple(tensors), backward=backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    # the stability shift is a constant, so the gradient is untouched
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    e = (x - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=int)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"status id out of range 0..{table.shape[0] - 1}: {ids.min()}..{ids.max()}")
    return table[ids]
