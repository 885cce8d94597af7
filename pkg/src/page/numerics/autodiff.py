"""Small reverse-mode autodiff over dense float64 numpy arrays.

Every op returns a new :class:`Tensor` holding references to its inputs and a
closure that pushes the output gradient back to them.  :func:`backward`
topologically orders the recorded graph and replays those closures once each,
in reverse.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

# Incremented on every completed backward pass; the optimizer uses it to
# refuse a step that was not preceded by one.
_backward_generation = 0
_grad_enabled = True


def backward_generation() -> int:
    return _backward_generation


@contextlib.contextmanager
def no_grad():
    """Record nothing inside the block; used for evaluation forwards."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class ShapeError(ValueError):
    pass


class Tensor:
    """Dense array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{label})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _result(data: np.ndarray, parents: Sequence[Tensor], op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    out._op = op
    out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
    out.grad = None
    out._parents = tuple(parents) if out.requires_grad else ()
    out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _result(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        def _bw(g):
            _accumulate(a, _unbroadcast(g, a.shape))
            _accumulate(b, _unbroadcast(g, b.shape))
        out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _result(a.data - b.data, (a, b), "sub")
    if out.requires_grad:
        def _bw(g):
            _accumulate(a, _unbroadcast(g, a.shape))
            _accumulate(b, _unbroadcast(-g, b.shape))
        out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _result(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        def _bw(g):
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
            _accumulate(b, _unbroadcast(g * a.data, b.shape))
        out._backward = _bw
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = _result(a.data * c, (a,), "scale")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g * c)
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = _result(y, (a,), "sigmoid")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g * y * (1.0 - y))
    return out


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = _result(np.where(mask, a.data, 0.0), (a,), "relu")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g * mask)
    return out


def log_sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = -np.logaddexp(0.0, -x)
    out = _result(y, (a,), "log_sigmoid")
    if out.requires_grad:
        s = np.exp(-np.logaddexp(0.0, x))  # sigmoid(-x), stable
        out._backward = lambda g: _accumulate(a, g * s)
    return out


def log(a: Tensor) -> Tensor:
    out = _result(np.log(a.data), (a,), "log")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g / a.data)
    return out


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = _result(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:
        def _bw(g):
            if a.requires_grad:
                _accumulate(a, g @ b.data.T)
            if b.requires_grad:
                _accumulate(b, a.data.T @ g)
        out._backward = _bw
    return out


def transpose(a: Tensor) -> Tensor:
    out = _result(a.data.T.copy(), (a,), "transpose")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g.T)
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction."""
    x = a.data
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {x.shape}")
    z = np.exp(x - x.max(axis=1, keepdims=True))
    y = z / z.sum(axis=1, keepdims=True)
    out = _result(y, (a,), "softmax_rows")
    if out.requires_grad:
        def _bw(g):
            inner = (g * y).sum(axis=1, keepdims=True)
            _accumulate(a, y * (g - inner))
        out._backward = _bw
    return out


# ---------------------------------------------------------------- reductions / reshaping

def sum_all(a: Tensor) -> Tensor:
    out = _result(np.array(a.data.sum()), (a,), "sum")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, np.broadcast_to(g, a.shape))
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    out = _result(np.array(a.data.mean()), (a,), "mean")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, np.broadcast_to(g / n, a.shape))
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat")
    if out.requires_grad:
        bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

        def _bw(g):
            for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
                _accumulate(t, piece)
        out._backward = _bw
    return out


def columns(a: Tensor, start: int, stop: int) -> Tensor:
    out = _result(a.data[:, start:stop].copy(), (a,), "columns")
    if out.requires_grad:
        def _bw(g):
            full = np.zeros_like(a.data)
            full[:, start:stop] = g
            _accumulate(a, full)
        out._backward = _bw
    return out


def take_rows(a: Tensor, index) -> Tensor:
    """Gather rows ``a[index]``; repeated indices accumulate on backward."""
    index = np.asarray(index, dtype=np.int64)
    out = _result(a.data[index], (a,), "take_rows")
    if out.requires_grad:
        def _bw(g):
            full = np.zeros_like(a.data)
            np.add.at(full, index, g)
            _accumulate(a, full)
        out._backward = _bw
    return out


def bag_mean(table: Tensor, bags: Sequence[Sequence[int]]) -> Tensor:
    """Mean of ``table`` rows per bag, one output row per bag.

    Bags must be nonempty.
    """
    rows = []
    flat: list[int] = []
    owner: list[int] = []
    weight: list[float] = []
    for i, bag in enumerate(bags):
        if len(bag) == 0:
            raise ValueError(f"bag {i} is empty")
        flat.extend(bag)
        owner.extend([i] * len(bag))
        weight.extend([1.0 / len(bag)] * len(bag))
        rows.append(table.data[list(bag)].mean(axis=0))
    out = _result(np.stack(rows) if rows else np.zeros((0, table.shape[1])), (table,), "bag_mean")
    if out.requires_grad:
        flat_i = np.asarray(flat, dtype=np.int64)
        owner_i = np.asarray(owner, dtype=np.int64)
        w = np.asarray(weight)[:, None]

        def _bw(g):
            full = np.zeros_like(table.data)
            np.add.at(full, flat_i, g[owner_i] * w)
            _accumulate(table, full)
        out._backward = _bw
    return out


# ---------------------------------------------------------------- backward

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> list[Tensor]:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Leaf gradients accumulate across calls (see :func:`zero_grads`);
    intermediate gradients are released once consumed.  Returns the non-leaf
    nodes in the order their backward closures ran.
    """
    global _backward_generation
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    visited: list[Tensor] = []
    if loss.requires_grad:
        order = _topological(loss)
        _accumulate(loss, np.ones_like(loss.data))
        for node in reversed(order):
            if node._backward is None:
                continue
            visited.append(node)
            if node.grad is not None:
                node._backward(node.grad)
            node.grad = None
    _backward_generation += 1
    return visited


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
