"""Dense tensor with reverse-mode automatic differentiation.

Every op in :mod:`anyflow.autodiff.ops` produces a :class:`Tensor` holding a
closure that maps the output gradient to input gradients.  ``backward`` walks
the recorded graph once in reverse topological order.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator, Sequence

import numpy as np

_state = threading.local()


def _get(name: str, default):
    return getattr(_state, name, default)


def default_dtype() -> np.dtype:
    return _get("dtype", np.dtype(np.float32))


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _state.dtype = dtype


@contextlib.contextmanager
def precision(bits: int) -> Iterator[None]:
    """Temporarily switch the default float width (32 or 64)."""
    prev = default_dtype()
    set_default_dtype(np.float64 if bits == 64 else np.float32)
    try:
        yield
    finally:
        set_default_dtype(prev)


def grad_enabled() -> bool:
    return _get("grad", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    prev = grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype or (data.dtype if isinstance(data, np.ndarray)
                                               and data.dtype.kind == "f" else default_dtype()))
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], backward, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.op = op
        if grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{flag})"

    # -- autodiff -------------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Populate ``.grad`` on every reachable leaf that requires grad.

        Leaf gradients accumulate into existing buffers.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return

        order = topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.array(g, dtype=node.dtype, copy=True)
                else:
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.add(ops.neg(self), other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.neg(self)

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
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)

    def sum(self):
        from . import ops
        return ops.sum(self)

    def mean(self):
        from . import ops
        return ops.mean(self)


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` with every node after its inputs.

    Iterative DFS, so deep unrolled graphs do not hit the recursion limit.
    """
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


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)
