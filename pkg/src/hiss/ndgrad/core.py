"""Tensor type and tape-style reverse-mode differentiation.

Every operation that touches a tensor requiring gradients attaches a
:class:`Node` to its output. Nodes hold the operation tag, the input
tensors, and a closure over whatever activations the backward rule needs.
Tensors get a monotonically increasing ``uid`` at construction, so sorting
the reachable nodes by uid yields a topological order; :func:`backward`
replays that record in exact reverse and then releases it.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import GraphError, NumericalError, ShapeError

_uids = itertools.count()
_local = threading.local()


def _grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable recording for the enclosed block (evaluation, benchmarks)."""
    prev = _grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


def allocated_floats() -> int:
    """Number of float64 values allocated by tensor ops on this thread."""
    return getattr(_local, "allocated", 0)


def reset_allocated_floats() -> None:
    _local.allocated = 0


class Node:
    __slots__ = ("tag", "inputs", "backward")

    def __init__(self, tag: str, inputs: tuple, backward: Callable):
        self.tag = tag
        self.inputs = inputs
        self.backward = backward


class Tensor:
    """Dense float64 array with optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "uid", "_node", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.base is not None or not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.uid = next(_uids)
        self._node: Node | None = None
        _local.allocated = getattr(_local, "allocated", 0) + arr.size

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operator sugar; implementations live in ops.py -----------------
    def __add__(self, other):
        from .ops import elementwise
        return elementwise("add", self, other)

    def __radd__(self, other):
        from .ops import elementwise
        return elementwise("add", other, self)

    def __sub__(self, other):
        from .ops import elementwise
        return elementwise("sub", self, other)

    def __rsub__(self, other):
        from .ops import elementwise
        return elementwise("sub", other, self)

    def __mul__(self, other):
        from .ops import elementwise
        return elementwise("mul", self, other)

    def __rmul__(self, other):
        from .ops import elementwise
        return elementwise("mul", other, self)

    def __truediv__(self, other):
        from .ops import elementwise
        return elementwise("div", self, other)

    def __rtruediv__(self, other):
        from .ops import elementwise
        return elementwise("div", other, self)

    def __neg__(self):
        from .ops import elementwise
        return elementwise("neg", self)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)

    def __getitem__(self, index):
        from .ops import getitem
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from .ops import sum as _sum
        return _sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from .ops import mean
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from .ops import reshape
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        from .ops import transpose
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(tag: str, out: np.ndarray, inputs: Sequence[Tensor],
                backward: Callable[[np.ndarray], tuple]) -> Tensor:
    """Wrap ``out`` as a tensor and record the node when gradients flow.

    ``backward(g)`` must return one gradient (or ``None``) per input, each
    either input-shaped or broadcast-reducible to it.
    """
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"operation '{tag}' produced non-finite values")
    result = Tensor(out)
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        result._node = Node(tag, tuple(inputs), backward)
    return result


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` over broadcast dimensions."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


@dataclass(frozen=True)
class RecordEntry:
    tag: str
    input_ids: tuple[int, ...]
    output_id: int


def _collect(loss: Tensor) -> list[Tensor]:
    seen: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._node is None or t.uid in seen:
            continue
        seen[t.uid] = t
        stack.extend(t._node.inputs)
    return [seen[k] for k in sorted(seen)]


def computation_record(loss: Tensor) -> list[RecordEntry]:
    """Topologically ordered record of the nodes reachable from ``loss``."""
    return [
        RecordEntry(t._node.tag, tuple(i.uid for i in t._node.inputs), t.uid)
        for t in _collect(loss)
    ]


def backward(loss: Tensor, grad: np.ndarray | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    The record is consumed: intermediate tensors drop their nodes, so a
    second call on the same loss raises :class:`GraphError`.
    """
    if grad is None:
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grad = np.ones(loss.shape)
    if not loss.requires_grad:
        raise GraphError("loss is detached from any parameter requiring gradients")
    if loss._node is None:
        loss.grad = grad.copy() if loss.grad is None else loss.grad + grad
        return

    record = _collect(loss)
    pending: dict[int, np.ndarray] = {loss.uid: np.asarray(grad, dtype=np.float64)}
    for t in reversed(record):
        node = t._node
        g = pending.pop(t.uid, None)
        t._node = None
        t.requires_grad = False
        if g is None:
            continue
        grads = node.backward(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            gi = unbroadcast(np.asarray(gi, dtype=np.float64), inp.shape)
            if inp._node is None:
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
            elif inp.uid in pending:
                pending[inp.uid] = pending[inp.uid] + gi
            else:
                pending[inp.uid] = gi
