"""Reverse-mode automatic differentiation over dense numpy arrays.

A ``Tensor`` wraps one ndarray plus an optional gradient. Operations build a
DAG of closures; ``backward()`` on a scalar root walks the graph once in
reverse topological order and accumulates gradients into every reachable
tensor that has ``requires_grad`` set. Gradients add up across repeated
backward calls until ``zero_grads`` clears them.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, UsageError

Array = np.ndarray

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Switch the dtype used for newly created tensors (float64 or float32)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise UsageError(f"unsupported default dtype {dt}")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """Dense array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data: Array = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        # Maps the output gradient to one gradient array (or None) per parent.
        self._backward: Callable[[Array], tuple[Array | None, ...]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Arithmetic sugar; every method delegates to the module-level ops below.

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __pow__(self, exponent):
        return power(self, exponent)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def swapaxes(self, axis1: int, axis2: int):
        return swapaxes(self, axis1, axis2)

    def narrow(self, axis: int, start: int, stop: int):
        return narrow(self, axis, start, stop)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``grad`` of every reachable tensor.

        Only defined for single-element roots; anything else raises.
        """
        if self.data.size != 1:
            raise UsageError(
                f"backward() requires a scalar root, got shape {self.shape}"
            )
        if not self.requires_grad:
            raise UsageError("backward() on a tensor that does not require grad")

        topo = _toposort(self)
        flow: dict[int, Array] = {id(self): np.ones_like(self.data)}
        for node in topo:
            g = flow.pop(id(node), None)
            if g is None:
                continue
            node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = flow.get(id(parent))
                flow[id(parent)] = pg if acc is None else acc + pg


def _toposort(root: Tensor) -> list[Tensor]:
    """Iterative post-order DFS; returns nodes root-first."""
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _wrap(data: Array, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to the parent's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if squeeze:
        g = g.sum(axis=squeeze, keepdims=True)
    return g.reshape(shape)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# Elementwise arithmetic (numpy broadcasting, gradients summed back to shape).


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _wrap(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    return _wrap(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    return _wrap(
        data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data
    return _wrap(
        data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return _wrap(-a.data, (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    return _wrap(data, (a,), lambda g: (g * data,))


def log(a: Tensor) -> Tensor:
    return _wrap(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)
    return _wrap(data, (a,), lambda g: (g * 0.5 / data,))


def power(a: Tensor, exponent: float) -> Tensor:
    p = float(exponent)
    data = a.data**p
    return _wrap(data, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def minimum_const(a: Tensor, cap: float) -> Tensor:
    """Elementwise min(a, cap); subgradient passes where a < cap."""
    data = np.minimum(a.data, cap)
    mask = (a.data < cap).astype(a.data.dtype)
    return _wrap(data, (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# Matmul.


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product [M,K] @ [K,N]."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    data = a.data @ b.data
    return _wrap(data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product [B,M,K] @ [B,K,N]."""
    if a.ndim != 3 or b.ndim != 3:
        raise DimensionError(f"bmm expects 3-D operands, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise DimensionError(f"bmm shapes incompatible: {a.shape} vs {b.shape}")
    data = np.matmul(a.data, b.data)
    return _wrap(
        data,
        (a, b),
        lambda g: (
            np.matmul(g, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), g),
        ),
    )


# ---------------------------------------------------------------------------
# Shape ops.


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in (shape if isinstance(shape, (tuple, list)) else (shape,)))
    data = a.data.reshape(shape)
    return _wrap(data, (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    data = np.swapaxes(a.data, axis1, axis2)
    return _wrap(data, (a,), lambda g: (np.swapaxes(g, axis1, axis2),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise UsageError("concat needs at least one tensor")
    tensors = tuple(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g: Array):
        return tuple(np.split(g, offsets, axis=axis))

    return _wrap(data, tensors, backward)


def narrow(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis."""
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    data = a.data[index]

    def backward(g: Array):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _wrap(data, (a,), backward)


# ---------------------------------------------------------------------------
# Reductions.


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g: Array):
        if axis is None:
            return (np.broadcast_to(g.reshape((1,) * a.ndim), a.shape),)
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(ax % a.ndim for ax in axes)
        if keepdims:
            expanded = g
        else:
            shape = list(a.shape)
            for ax in axes:
                shape[ax] = 1
            expanded = g.reshape(shape)
        return (np.broadcast_to(expanded, a.shape),)

    return _wrap(data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.shape[ax % a.ndim]
    return tensor_sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)
