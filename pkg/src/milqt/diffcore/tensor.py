"""Dense float64 tensors with a reverse-mode gradient tape."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """Immutable dense array plus an optional gradient slot.

    Values are stored as a read-only float64 ndarray (row-major). Tensors
    produced by an op keep a reference to the node that made them, so a
    loss can be differentiated without any global state.
    """

    __slots__ = ("_values", "requires_grad", "grad", "_node", "name")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        arr = np.array(values, dtype=np.float64, copy=True, order="C")
        arr.setflags(write=False)
        self._values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: Node | None = None
        self.name = name

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def shape(self) -> tuple[int, ...]:
        return self._values.shape

    @property
    def ndim(self) -> int:
        return self._values.ndim

    @property
    def size(self) -> int:
        return self._values.size

    def flat(self) -> np.ndarray:
        return self._values.reshape(-1)

    def item(self) -> float:
        if self._values.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return float(self._values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self._values

    def detach(self) -> "Tensor":
        return Tensor(self._values)

    def zero_grad(self) -> None:
        self.grad = None

    def _assign(self, values) -> None:
        # optimizer / checkpoint use only; never called inside a forward pass
        arr = np.array(values, dtype=np.float64, copy=True, order="C")
        if arr.shape != self._values.shape:
            raise DimensionError(f"assign: {arr.shape} into {self._values.shape}")
        arr.setflags(write=False)
        self._values = arr

    def __repr__(self) -> str:
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar; the op functions in ``ops`` are the real surface
    def __add__(self, other):
        from . import ops

        return ops.add(self, other) if isinstance(other, Tensor) else ops.shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other) if isinstance(other, Tensor) else ops.shift(self, -other)

    def __rsub__(self, other):
        from . import ops

        return ops.shift(ops.scale(self, -1.0), other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other) if isinstance(other, Tensor) else ops.scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class ComputationTape:
    """Topologically ordered record of the nodes that produced a tensor."""

    nodes: list[Node] = field(default_factory=list)

    @classmethod
    def from_root(cls, root: Tensor) -> "ComputationTape":
        order: list[Node] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            node = t._node
            if node is None:
                continue
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((t, True))
            for inp in node.inputs:
                if inp._node is not None and id(inp._node) not in seen:
                    stack.append((inp, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)


def make_result(op: str, values: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(values)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = Node(op, tuple(inputs), out, backward)
    return out


def backward(loss: Tensor) -> ComputationTape:
    """Accumulate d(loss)/d(leaf) into ``grad`` of every requires_grad leaf.

    Returns the tape that was replayed.
    """
    if loss.size != 1:
        raise DimensionError(f"backward() needs a scalar root, got shape {loss.shape}")
    tape = ComputationTape.from_root(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for node in reversed(tape.nodes):
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue
        for inp, g in zip(node.inputs, node.backward(g_out)):
            if g is None or not inp.requires_grad:
                continue
            if inp._node is None:
                inp.grad = g.copy() if inp.grad is None else inp.grad + g
            else:
                key = id(inp)
                grads[key] = g if key not in grads else grads[key] + g
    if loss._node is None and loss.requires_grad:
        loss.grad = np.ones(loss.shape) if loss.grad is None else loss.grad + 1.0
    return tape
