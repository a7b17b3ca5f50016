"""Reverse-mode automatic differentiation over numpy arrays.

Each operation returns a new Tensor holding its result; when grad mode is
on and an input requires gradients, the output also records its parents
and a closure that pushes the upstream gradient to them.  `backward`
topologically sorts the recorded graph from the loss and runs the
closures, accumulating into `.grad` of every tensor that requires it.

Storage is float32 by default; building a graph from float64 tensors runs
the whole computation in float64, which the gradient checks rely on.
"""

from __future__ import annotations

import numpy as np

from ..errors import NoRecordedGraph, ShapeMismatch

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
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

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _attach(out: Tensor, parents: tuple, backward_fn) -> Tensor:
    """Record the graph edge if recording is on and any parent needs grads."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _const(value, like: Tensor) -> np.ndarray:
    return np.asarray(value, dtype=like.data.dtype)


def add(x: Tensor, y) -> Tensor:
    if isinstance(y, Tensor):
        out = Tensor(x.data + y.data)

        def _bw():
            if x.requires_grad:
                _accum(x, _unbroadcast(out.grad, x.data.shape))
            if y.requires_grad:
                _accum(y, _unbroadcast(out.grad, y.data.shape))

        return _attach(out, (x, y), _bw)
    c = _const(y, x)
    out = Tensor(x.data + c)

    def _bw_const():
        _accum(x, _unbroadcast(out.grad, x.data.shape))

    return _attach(out, (x,), _bw_const)


def mul(x: Tensor, y) -> Tensor:
    if isinstance(y, Tensor):
        out = Tensor(x.data * y.data)

        def _bw():
            if x.requires_grad:
                _accum(x, _unbroadcast(out.grad * y.data, x.data.shape))
            if y.requires_grad:
                _accum(y, _unbroadcast(out.grad * x.data, y.data.shape))

        return _attach(out, (x, y), _bw)
    c = _const(y, x)
    out = Tensor(x.data * c)

    def _bw_const():
        _accum(x, _unbroadcast(out.grad * c, x.data.shape))

    return _attach(out, (x,), _bw_const)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))

    def _bw():
        _accum(x, out.grad * (x.data > 0))

    return _attach(out, (x,), _bw)


def _sigmoid_data(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = Tensor(_sigmoid_data(x.data))

    def _bw():
        _accum(x, out.grad * out.data * (1.0 - out.data))

    return _attach(out, (x,), _bw)


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data))

    def _bw():
        _accum(x, out.grad / x.data)

    return _attach(out, (x,), _bw)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(x.data, lo, hi))

    def _bw():
        _accum(x, out.grad * ((x.data >= lo) & (x.data <= hi)))

    return _attach(out, (x,), _bw)


def mean(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.mean(), dtype=x.data.dtype))

    def _bw():
        _accum(x, np.full_like(x.data, out.grad / x.data.size))

    return _attach(out, (x,), _bw)


def concat(tensors: list, axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def _bw():
        parts = np.split(out.grad, splits, axis=axis)
        for t, g in zip(tensors, parts):
            if t.requires_grad:
                _accum(t, g)

    return _attach(out, tuple(tensors), _bw)


def backward(loss: Tensor, grad: float = 1.0) -> None:
    """Backpropagate from `loss`, accumulating into .grad of every tensor
    that requires gradients.  `grad` seeds the upstream gradient."""
    if not loss._parents and loss._backward is None:
        raise NoRecordedGraph(
            "tensor has no recorded graph; run the forward pass with "
            "grad mode enabled"
        )
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if p.requires_grad:
                stack.append((p, False))
    _accum(loss, np.full_like(loss.data, grad))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()
