"""Minimal reverse-mode differentiation over numpy arrays.

A Tensor records its parents and a backward closure as it is computed;
calling backward() on a scalar loss replays the tape once in reverse
topological order. Only what the adapted models need is implemented:
broadcast add/mul, (batched) matmul, reshape/transpose, reductions,
tanh/relu, softmax, cross-entropy and squared-error losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, NumericalFailure


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and grad.shape[ax] > 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # ---- arithmetic ----

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(self.data + other.data, _parents=(self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        out._backward = bw
        return out

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(self.data * other.data, _parents=(self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out._backward = bw
        return out

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-(other if isinstance(other, Tensor) else Tensor(other)))

    def __pow__(self, p: float):
        out = Tensor(self.data ** p, _parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * p * self.data ** (p - 1))

        out._backward = bw
        return out

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(np.matmul(self.data, other.data), _parents=(self, other))

        def bw(g):
            if self.requires_grad:
                ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self._accumulate(_unbroadcast(ga, self.data.shape))
            if other.requires_grad:
                gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                other._accumulate(_unbroadcast(gb, other.data.shape))

        out._backward = bw
        return out

    # ---- shape ----

    def reshape(self, *shape):
        orig = self.data.shape
        out = Tensor(self.data.reshape(*shape), _parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g.reshape(orig))

        out._backward = bw
        return out

    def transpose(self, *axes):
        axes = axes or tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)
        out = Tensor(self.data.transpose(axes), _parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g.transpose(inv))

        out._backward = bw
        return out

    @property
    def T(self):
        return self.transpose()

    # ---- reductions / nonlinearities ----

    def sum(self):
        out = Tensor(self.data.sum(), _parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(np.full_like(self.data, g))

        out._backward = bw
        return out

    def mean(self, axis=None):
        out = Tensor(self.data.mean(axis=axis), _parents=(self,))
        count = self.data.size if axis is None else self.data.shape[axis]

        def bw(g):
            if self.requires_grad:
                if axis is None:
                    self._accumulate(np.full_like(self.data, g / count))
                else:
                    self._accumulate(np.expand_dims(g, axis) / count * np.ones_like(self.data))

        out._backward = bw
        return out

    def tanh(self):
        y = np.tanh(self.data)
        out = Tensor(y, _parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * (1.0 - y * y))

        out._backward = bw
        return out

    def relu(self):
        y = np.maximum(self.data, 0.0)
        out = Tensor(y, _parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * (self.data > 0))

        out._backward = bw
        return out

    def softmax(self, axis=-1):
        z = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=axis, keepdims=True)
        out = Tensor(s, _parents=(self,))

        def bw(g):
            if self.requires_grad:
                dot = (g * s).sum(axis=axis, keepdims=True)
                self._accumulate(s * (g - dot))

        out._backward = bw
        return out

    # ---- losses ----

    def cross_entropy(self, labels: np.ndarray) -> "Tensor":
        """Mean negative log-likelihood of integer labels under row logits."""
        logits = self.data
        if logits.ndim != 2:
            raise ContractViolation(f"expected (batch, classes) logits, got {logits.shape}")
        labels = np.asarray(labels, dtype=np.int64)
        b = logits.shape[0]
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        out = Tensor(-logp[np.arange(b), labels].mean(), _parents=(self,))

        def bw(g):
            if self.requires_grad:
                probs = np.exp(logp)
                probs[np.arange(b), labels] -= 1.0
                self._accumulate(g * probs / b)

        out._backward = bw
        return out

    def mse(self, target: np.ndarray) -> "Tensor":
        """Mean squared error against a fixed target array."""
        diff = self.data - np.asarray(target, dtype=np.float64)
        out = Tensor((diff * diff).mean(), _parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * 2.0 * diff / diff.size)

        out._backward = bw
        return out

    # ---- tape replay ----

    def backward(self):
        if self.data.shape != ():
            raise ContractViolation("backward() requires a scalar loss")
        if not np.isfinite(self.data):
            raise NumericalFailure(f"non-finite loss {self.data}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, iter(self._parents))]
        seen.add(id(self))
        while stack:
            node, it = stack[-1]
            child = next(it, None)
            if child is None:
                stack.pop()
                topo.append(node)
            elif id(child) not in seen:
                seen.add(id(child))
                stack.append((child, iter(child._parents)))
        self.grad = np.asarray(1.0)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None and node.requires_grad:
                node._backward(node.grad)


@dataclass
class GradBuffer:
    """Per-core gradients plus the scalar loss they came from."""

    grads: list[np.ndarray]
    loss: float

    def __post_init__(self):
        if not np.isfinite(self.loss):
            raise NumericalFailure(f"non-finite loss {self.loss}")
