"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 ndarray and records the operation that
produced it; :func:`backward` replays the tape in reverse topological order,
accumulating gradients into every tensor that requires them. The op set is
exactly what the encoder-decoder model needs: broadcasting arithmetic,
matmul, relu, softmax, reductions, reshapes, embedding lookup and power.

Gradients of broadcast operands are summed back to the operand shape.
``detach`` cuts the tape, which is how stop-gradient semantics are built.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

Array = np.ndarray


def _as_array(x) -> Array:
    if isinstance(x, np.ndarray):
        return x.astype(np.float64, copy=False)
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    n_extra = grad.ndim - len(shape)
    if n_extra > 0:
        grad = grad.sum(axis=tuple(range(n_extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward_fn: Optional[Callable[[Array], None]] = None,
        name: str = "",
    ):
        self.data = _as_array(data)
        self.grad: Optional[Array] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def accumulate(self, grad: Array) -> None:
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def detach(self) -> "Tensor":
        """A constant view of this tensor: no gradient flows through it."""
        return Tensor(self.data)

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str = "") -> Tensor:
    """A leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True, name=name)


# ---------------------------------------------------------------------------
# Ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def bw(grad: Array) -> None:
        if a.requires_grad:
            a.accumulate(_unbroadcast(grad, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(grad, b.shape))

    return Tensor(out_data, parents=(a, b), backward_fn=bw)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def bw(grad: Array) -> None:
        if a.requires_grad:
            a.accumulate(_unbroadcast(grad * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(grad * a.data, b.shape))

    return Tensor(out_data, parents=(a, b), backward_fn=bw)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data @ b.data

    def bw(grad: Array) -> None:
        if a.requires_grad:
            ga = grad @ np.swapaxes(b.data, -1, -2)
            a.accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ grad
            b.accumulate(_unbroadcast(gb, b.shape))

    return Tensor(out_data, parents=(a, b), backward_fn=bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out_data = a.data * mask

    def bw(grad: Array) -> None:
        if a.requires_grad:
            a.accumulate(grad * mask)

    return Tensor(out_data, parents=(a,), backward_fn=bw)


def power(a: Tensor, exponent: float) -> Tensor:
    out_data = a.data ** exponent

    def bw(grad: Array) -> None:
        if a.requires_grad:
            a.accumulate(grad * exponent * a.data ** (exponent - 1.0))

    return Tensor(out_data, parents=(a,), backward_fn=bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out_data = exp / exp.sum(axis=axis, keepdims=True)

    def bw(grad: Array) -> None:
        if a.requires_grad:
            inner = (grad * out_data).sum(axis=axis, keepdims=True)
            a.accumulate(out_data * (grad - inner))

    return Tensor(out_data, parents=(a,), backward_fn=bw)


def mean(a: Tensor, axis: int = -1, keepdims: bool = True) -> Tensor:
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.shape[axis]

    def bw(grad: Array) -> None:
        if a.requires_grad:
            g = grad if keepdims else np.expand_dims(grad, axis)
            a.accumulate(np.broadcast_to(g / n, a.shape).copy())

    return Tensor(out_data, parents=(a,), backward_fn=bw)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(grad: Array) -> None:
        if a.requires_grad:
            g = grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.accumulate(np.broadcast_to(g, a.shape).copy())

    return Tensor(out_data, parents=(a,), backward_fn=bw)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out_data = a.data.reshape(shape)

    def bw(grad: Array) -> None:
        if a.requires_grad:
            a.accumulate(grad.reshape(a.shape))

    return Tensor(out_data, parents=(a,), backward_fn=bw)


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    out_data = np.swapaxes(a.data, axis1, axis2)

    def bw(grad: Array) -> None:
        if a.requires_grad:
            a.accumulate(np.swapaxes(grad, axis1, axis2))

    return Tensor(out_data, parents=(a,), backward_fn=bw)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``weight[ids]``; backward scatter-adds into the table."""
    ids = np.asarray(ids)
    out_data = weight.data[ids]

    def bw(grad: Array) -> None:
        if weight.requires_grad:
            table_grad = np.zeros_like(weight.data)
            np.add.at(table_grad, ids.reshape(-1), grad.reshape(-1, weight.shape[-1]))
            weight.accumulate(table_grad)

    return Tensor(out_data, parents=(weight,), backward_fn=bw)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(root: Tensor, seed: Array) -> None:
    """Backpropagate ``seed`` (d loss / d root) through the tape below root."""
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != root.shape:
        raise ValueError(f"seed gradient shape {seed.shape} != root shape {root.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            stack.append((parent, False))
    root.accumulate(seed)
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)
