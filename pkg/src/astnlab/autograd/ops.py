"""Differentiable primitives: elementwise math, reductions, shape ops and BCE."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor, as_tensor

BCE_CLAMP = 1e-7


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# -- elementwise -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._make(a.values + b.values, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._make(a.values - b.values, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return Tensor._make(a.values * b.values, (a, b), backward, "mul")


def neg(x: Tensor) -> Tensor:
    return Tensor._make(-x.values, (x,), lambda g: (-g,), "neg")


def square(x: Tensor) -> Tensor:
    return Tensor._make(x.values * x.values, (x,), lambda g: (2 * x.values * g,), "square")


def abs(x: Tensor) -> Tensor:
    # subgradient 0 at the kink
    return Tensor._make(np.abs(x.values), (x,), lambda g: (np.sign(x.values) * g,), "abs")


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return Tensor._make(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.values)
    return Tensor._make(out, (x,), lambda g: (g * (1 - out * out),), "tanh")


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    """Identity for x >= 0, ``slope * x`` otherwise."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky slope must lie in (0, 1), got {slope}")
    v = x.values
    neg_mask = v < 0
    out = np.where(neg_mask, v * v.dtype.type(slope), v)

    def backward(g):
        return (np.where(neg_mask, g * g.dtype.type(slope), g),)

    return Tensor._make(out, (x,), backward, "leaky_relu")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.values.T, a.values.T @ g

    return Tensor._make(a.values @ b.values, (a, b), backward, "matmul")


# -- reductions --------------------------------------------------------------


def sum(x: Tensor, axis=None) -> Tensor:
    out = x.values.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._make(np.asarray(out, dtype=x.dtype), (x,), backward, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    out = x.values.mean(axis=axis)
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype),)

    return Tensor._make(np.asarray(out, dtype=x.dtype), (x,), backward, "mean")


# -- shape ops ---------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    return Tensor._make(x.values.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return Tensor._make(
        np.ascontiguousarray(x.values.transpose(axes)), (x,), lambda g: (g.transpose(inverse),), "transpose"
    )


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(x: Tensor, index) -> Tensor:
    basic = _is_basic(index)

    def backward(g):
        full = np.zeros_like(x.values)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor._make(np.array(x.values[index]), (x,), backward, "getitem")


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather along ``axis`` with an integer index array (repeats allowed)."""
    idx = np.asarray(indices, dtype=np.intp)

    def backward(g):
        full = np.zeros_like(x.values)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0) if idx.ndim == 1 else _move_index_axes(g, axis, idx.ndim))
        return (full,)

    return Tensor._make(np.take(x.values, idx, axis=axis), (x,), backward, "take")


def _move_index_axes(g: np.ndarray, axis: int, k: int) -> np.ndarray:
    # np.take places the k index dims at ``axis``; bring them to the front
    return np.moveaxis(g, list(range(axis, axis + k)), list(range(k)))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.values for t in tensors], axis=axis), tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._make(np.stack([t.values for t in tensors], axis=axis), tensors, backward, "stack")


# -- losses ------------------------------------------------------------------


def bce(pred: Tensor, target, weights=None) -> Tensor:
    """Weighted sum of binary cross-entropy terms.

    Predictions are clamped to [1e-7, 1 - 1e-7]; clamped entries pass no
    gradient.
    """
    y = np.asarray(target, dtype=pred.dtype)
    w = np.ones_like(pred.values) if weights is None else np.asarray(weights, dtype=pred.dtype)
    y = np.broadcast_to(y, pred.shape)
    w = np.broadcast_to(w, pred.shape)
    lo, hi = pred.dtype.type(BCE_CLAMP), pred.dtype.type(1 - BCE_CLAMP)
    p = np.clip(pred.values, lo, hi)
    terms = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    out = np.asarray((w * terms).sum(), dtype=pred.dtype)
    inside = (pred.values >= lo) & (pred.values <= hi)

    def backward(g):
        dp = w * (-(y / p) + (1 - y) / (1 - p)) * inside
        return (g * dp,)

    return Tensor._make(out, (pred,), backward, "bce")
