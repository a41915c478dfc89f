"""Minimal reverse-mode autodiff over numpy arrays.

Implements exactly the operations the speaker/listener networks need:
elementwise arithmetic, matrix products, sigmoid/tanh, embedding lookup,
row slicing, masked log-softmax and per-row gathers.  Backward passes
accumulate into ``.grad`` buffers; optimizers own the zeroing.
"""

from __future__ import annotations

import numpy as np

_GRAD_ENABLED = True


class no_grad:
    """Context manager that skips graph construction (evaluation paths)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from a scalar; accumulates into leaf ``.grad``."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        _accumulate(self, np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # Small operator surface; everything else goes through module functions.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return _sum(self)

    def mean(self):
        return mean(self)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` back down to ``shape`` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g


def _make(data, parents: tuple, backward) -> Tensor:
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = parents
        out._backward = backward
    return out


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), bw)


def matmul(a, b) -> Tensor:
    """a @ b for 2-d operands."""
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _make(data, (a, b), bw)


def matmul_nt(a, b) -> Tensor:
    """a @ b.T; scores a batch of vectors against a table of rows."""
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data @ b.data.T

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data)
        if b.requires_grad:
            _accumulate(b, g.T @ a.data)

    return _make(data, (a, b), bw)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    # Numerically stable two-sided form.
    data = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                    np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))

    def bw(g):
        if x.requires_grad:
            _accumulate(x, g * data * (1.0 - data))

    return _make(data, (x,), bw)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    data = np.tanh(x.data)

    def bw(g):
        if x.requires_grad:
            _accumulate(x, g * (1.0 - data * data))

    return _make(data, (x,), bw)


def embedding(table: Tensor, idx) -> Tensor:
    """Row lookup ``table[idx]``; backward scatter-adds into the table."""
    idx = np.asarray(idx)
    data = table.data[idx]

    def bw(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)

    return _make(data, (table,), bw)


def rows(table: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice ``table[start:stop]`` with scatter backward."""
    data = table.data[start:stop]

    def bw(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            table.grad[start:stop] += g

    return _make(data, (table,), bw)


def log_softmax(x, allowed: np.ndarray | None = None) -> Tensor:
    """Row-wise log-softmax over the last axis.

    ``allowed`` is an optional boolean mask (broadcastable to ``x``); masked
    entries get probability zero and -inf log-probability, and receive no
    gradient.  At least one entry per row must be allowed.
    """
    x = _as_tensor(x)
    z = x.data if allowed is None else np.where(allowed, x.data, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    ez = np.exp(z - m)
    data = z - (m + np.log(ez.sum(axis=-1, keepdims=True)))

    def bw(g):
        if x.requires_grad:
            sm = np.exp(data)
            _accumulate(x, g - sm * g.sum(axis=-1, keepdims=True))

    return _make(data, (x,), bw)


def gather_rows(x, idx) -> Tensor:
    """Per-row pick: out[b] = x[b, idx[b]]."""
    x = _as_tensor(x)
    idx = np.asarray(idx)
    ar = np.arange(x.data.shape[0])
    data = x.data[ar, idx]

    def bw(g):
        if x.requires_grad:
            buf = np.zeros_like(x.data)
            buf[ar, idx] = g
            _accumulate(x, buf)

    return _make(data, (x,), bw)


def _sum(x) -> Tensor:
    x = _as_tensor(x)
    data = np.asarray(x.data.sum())

    def bw(g):
        if x.requires_grad:
            _accumulate(x, np.broadcast_to(g, x.data.shape).copy())

    return _make(data, (x,), bw)


def mean(x) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size
    data = np.asarray(x.data.mean())

    def bw(g):
        if x.requires_grad:
            _accumulate(x, np.broadcast_to(g / n, x.data.shape).copy())

    return _make(data, (x,), bw)
