"""Minimal reverse-mode autodiff over dense numpy arrays.

Forward ops build a graph of Tensor nodes; backward() runs a topological
sweep accumulating gradients. Tests run at float64; training may configure
float32 via the `dtype` argument on parameters.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = parents

    # -- graph plumbing ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self, grad: np.ndarray | None = None):
        topo, seen = [], set()

        def build(t):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p in t._parents:
                build(p)
            topo.append(t)

        build(self)
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without grad requires a scalar")
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=np.float64)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward()

    def _accum(self, grad: np.ndarray):
        grad = _unbroadcast(np.asarray(grad), self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    @staticmethod
    def _wrap(other):
        return other if isinstance(other, Tensor) else Tensor(other)

    @staticmethod
    def _make(data, parents):
        parents = tuple(p for p in parents if isinstance(p, Tensor))
        rg = any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=rg, parents=parents if rg else ())

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = self._wrap(other)
        out = self._make(self.data + other.data, (self, other))
        if out.requires_grad:
            def back():
                if self.requires_grad:
                    self._accum(out.grad)
                if other.requires_grad:
                    other._accum(out.grad)
            out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = self._make(-self.data, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(-out.grad)
        return out

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        other = self._wrap(other)
        out = self._make(self.data * other.data, (self, other))
        if out.requires_grad:
            def back():
                if self.requires_grad:
                    self._accum(out.grad * other.data)
                if other.requires_grad:
                    other._accum(out.grad * self.data)
            out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._wrap(other)
        out = self._make(self.data / other.data, (self, other))
        if out.requires_grad:
            def back():
                if self.requires_grad:
                    self._accum(out.grad / other.data)
                if other.requires_grad:
                    other._accum(-out.grad * self.data / (other.data ** 2))
            out._backward = back
        return out

    def __rtruediv__(self, other):
        return self._wrap(other) / self

    def __pow__(self, exponent: float):
        out = self._make(self.data ** exponent, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(
                out.grad * exponent * self.data ** (exponent - 1))
        return out

    def __matmul__(self, other):
        other = self._wrap(other)
        if self.data.shape[-1] != other.data.shape[-2 if other.ndim > 1 else 0]:
            raise ShapeMismatch(
                f"matmul {self.data.shape} @ {other.data.shape}")
        out = self._make(np.matmul(self.data, other.data), (self, other))
        if out.requires_grad:
            def back():
                g = out.grad
                if self.requires_grad:
                    self._accum(_unbroadcast(
                        np.matmul(g, np.swapaxes(other.data, -1, -2)),
                        self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(
                        np.matmul(np.swapaxes(self.data, -1, -2), g),
                        other.data.shape))
            out._backward = back
        return out

    # -- shape ops ---------------------------------------------------------

    def reshape(self, *shape):
        out = self._make(self.data.reshape(*shape), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        axes = axes or None
        out = self._make(np.transpose(self.data, axes), (self,))
        if out.requires_grad:
            inv = np.argsort(axes) if axes else None
            out._backward = lambda: self._accum(np.transpose(out.grad, inv))
        return out

    def swapaxes(self, a, b):
        out = self._make(np.swapaxes(self.data, a, b), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(np.swapaxes(out.grad, a, b))
        return out

    def __getitem__(self, idx):
        out = self._make(self.data[idx], (self,))
        if out.requires_grad:
            def back():
                g = np.zeros_like(self.data)
                np.add.at(g, idx, out.grad)
                self._accum(g)
            out._backward = back
        return out

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = self._make(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def back():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.data.shape))
            out._backward = back
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- elementwise nonlinearities ------------------------------------------

    def exp(self):
        out = self._make(np.exp(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * out.data)
        return out

    def log(self):
        out = self._make(np.log(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad / self.data)
        return out

    def sqrt(self):
        return self ** 0.5

    def relu(self):
        mask = self.data > 0
        out = self._make(self.data * mask, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * mask)
        return out

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = self._make(s, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * s * (1 - s))
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = self._make(t, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * (1 - t * t))
        return out

    def softplus(self):
        # stable: log1p(exp(-|x|)) + max(x, 0)
        d = np.log1p(np.exp(-np.abs(self.data))) + np.maximum(self.data, 0.0)
        out = self._make(d, (self,))
        if out.requires_grad:
            s = 1.0 / (1.0 + np.exp(-self.data))
            out._backward = lambda: self._accum(out.grad * s)
        return out

    def softmax(self, axis: int = -1):
        z = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=axis, keepdims=True)
        out = self._make(s, (self,))
        if out.requires_grad:
            def back():
                g = out.grad
                dot = (g * s).sum(axis=axis, keepdims=True)
                self._accum(s * (g - dot))
            out._backward = back
        return out

    def log_softmax(self, axis: int = -1):
        z = self.data - self.data.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
        ls = z - lse
        out = self._make(ls, (self,))
        if out.requires_grad:
            s = np.exp(ls)
            def back():
                g = out.grad
                self._accum(g - s * g.sum(axis=axis, keepdims=True))
            out._backward = back
        return out


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    out = Tensor._make(np.concatenate(datas, axis=axis), tuple(tensors))
    if out.requires_grad:
        sizes = [d.shape[axis] for d in datas]
        offsets = np.cumsum([0] + sizes)

        def back():
            g = out.grad
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    t._accum(g[tuple(idx)])
        out._backward = back
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: output shape ids.shape + (d,)."""
    ids = np.asarray(ids, dtype=np.intp)
    from ..errors import UnknownId
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise UnknownId(f"id outside table of {table.shape[0]} rows")
    out = Tensor._make(table.data[ids], (table,))
    if out.requires_grad:
        def back():
            g = np.zeros_like(table.data)
            np.add.at(g, ids, out.grad)
            table._accum(g)
        out._backward = back
    return out


def parameter(data, rng: np.random.Generator | None = None) -> Tensor:
    return Tensor(data, requires_grad=True)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple | None = None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    shape = shape or (fan_in, fan_out)
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)
