"""Reverse-mode autodiff tensor over numpy arrays.

Each op builds a node holding its parents and a closure mapping the output
gradient to per-parent gradients. ``Tensor.backward`` walks the graph in
reverse topological order exactly once; the consumed graph is released and a
second call raises.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

_state = threading.local()


def get_default_dtype() -> np.dtype:
    return getattr(_state, "dtype", np.dtype(np.float32))


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype used for new tensors (float32 or float64)."""
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    prev = get_default_dtype()
    _state.dtype = dtype
    try:
        yield
    finally:
        _state.dtype = prev


@contextlib.contextmanager
def no_grad():
    """Ops run inside this block record nothing and produce constant tensors."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def inject_gradient_fault(op: str, factor: float = 1.5):
    """Test hook: scale every gradient leaving ``op`` nodes by ``factor``.

    Used to confirm that the gradient checker notices a broken backward rule.
    """
    prev = getattr(_state, "fault", None)
    _state.fault = (op, float(factor))
    try:
        yield
    finally:
        _state.fault = prev


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """An n-d array of reals with an optional gradient buffer.

    Leaf tensors created with ``requires_grad=True`` own a ``grad`` buffer of
    the same shape; interior nodes keep gradients only while ``backward`` runs.
    """

    __array_priority__ = 100.0

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(values)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(get_default_dtype())
        self.values: np.ndarray = arr
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._op: str | None = None
        self._released = False
        self._requires_grad = False
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    # -- basic attributes -------------------------------------------------

    @property
    def requires_grad(self) -> bool:
        return self._requires_grad

    @requires_grad.setter
    def requires_grad(self, flag: bool) -> None:
        flag = bool(flag)
        if self._op is None:
            if flag and self.grad is None:
                self.grad = np.zeros_like(self.values)
            elif not flag:
                self.grad = None
        self._requires_grad = flag

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_leaf(self) -> bool:
        return self._op is None

    def __len__(self) -> int:
        return self.values.shape[0]

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}{op})"

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.values)

    def astype(self, dtype) -> "Tensor":
        """Leaf copy with a new dtype; keeps requires_grad and name."""
        return Tensor(self.values.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _make(values: np.ndarray, parents: Iterable["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        parents = tuple(parents)
        out = Tensor(values)
        if _grad_enabled() and any(p.requires_grad for p in parents):
            out._parents = parents
            out._backward = backward
            out._op = op
            out._requires_grad = True
        return out

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.values.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise RuntimeError("loss does not depend on any tensor that requires grad")
        order = tape(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.values)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if node._op is None:
                if g is not None and node.requires_grad:
                    node.grad += g
                continue
            if node._released:
                raise RuntimeError(
                    f"graph through op '{node._op}' was already consumed by an earlier backward()"
                )
            if g is not None:
                fault = getattr(_state, "fault", None)
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    if fault is not None and fault[0] == node._op:
                        pg = pg * fault[1]
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            node._released = True
            node._backward = None

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        return ops.transpose(self, axes or None)

    def sum(self, axis=None):
        from . import ops
        return ops.sum(self, axis)

    def mean(self, axis=None):
        from . import ops
        return ops.mean(self, axis)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else get_default_dtype()
    return Tensor(np.asarray(x, dtype=dtype))


def tape(root: Tensor) -> list[Tensor]:
    """Topologically ordered nodes reachable from ``root`` (inputs first)."""
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
            if id(parent) not in seen:
                stack.append((parent, False))
    return order
