"""
Reverse-mode automatic differentiation over a recorded expression tape.

Nodes are appended in evaluation order, so the node list is already a
topological order of the (acyclic) expression graph. Recording evaluates each
node eagerly; ``Tape.forward`` re-evaluates the whole tape for new input
values, which is how the line search and the finite-difference checker
reuse one tape for many points.

Usage::

    tape = Tape()
    x = tape.input("x", 2.0)
    y = tape.input("y", 3.0)
    tape.set_output(x * y)
    tape.forward()
    grads = tape.backward()   # {"x": 3.0, "y": 2.0}
"""
from __future__ import annotations

from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from wsee_unfold.autodiff.primitives import BACKWARD, FORWARD, Op
from wsee_unfold.core.exceptions import DomainError, ShapeError, TapeStateError


class Node:
    """One recorded value on a tape. Supports the arithmetic operators."""

    __slots__ = ("tape", "index", "op", "parents", "attrs", "value", "name", "requires_grad")

    # numpy must hand mixed ndarray/Node arithmetic back to the Node operators
    __array_ufunc__ = None

    def __init__(
        self,
        tape: "Tape",
        index: int,
        op: Op,
        parents: Sequence["Node"],
        attrs: Dict[str, Any],
        value: np.ndarray,
        name: Optional[str] = None,
    ):
        self.tape = tape
        self.index = index
        self.op = op
        self.parents = tuple(parents)
        self.attrs = attrs
        self.value = value
        self.name = name
        self.requires_grad = op == Op.INPUT or any(p.requires_grad for p in self.parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def describe(self) -> str:
        label = f"#{self.index}:{self.op}"
        return f"{label}[{self.name}]" if self.name else label

    def __repr__(self) -> str:
        return f"Node({self.describe()}, shape={self.shape})"

    def __add__(self, other):
        from wsee_unfold.autodiff import functional as F
        return F.add(self, other)

    def __radd__(self, other):
        from wsee_unfold.autodiff import functional as F
        return F.add(other, self)

    def __sub__(self, other):
        from wsee_unfold.autodiff import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from wsee_unfold.autodiff import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from wsee_unfold.autodiff import functional as F
        return F.mul(self, other)

    def __rmul__(self, other):
        from wsee_unfold.autodiff import functional as F
        return F.mul(other, self)

    def __truediv__(self, other):
        from wsee_unfold.autodiff import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from wsee_unfold.autodiff import functional as F
        return F.div(other, self)

    def __neg__(self):
        from wsee_unfold.autodiff import functional as F
        return F.neg(self)

    def __matmul__(self, other):
        from wsee_unfold.autodiff import functional as F
        return F.matmul(self, other)

    def __rmatmul__(self, other):
        from wsee_unfold.autodiff import functional as F
        return F.matmul(other, self)

    def reshape(self, *shape):
        from wsee_unfold.autodiff import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False):
        from wsee_unfold.autodiff import functional as F
        return F.reduce_sum(self, axis=axis, keepdims=keepdims)


class Tape:
    """An append-only record of primitive operations with their values and adjoints."""

    def __init__(self):
        self.nodes: List[Node] = []
        self.inputs: Dict[str, Node] = {}
        self.output: Optional[Node] = None
        self._forward_complete = False
        self._adjoints: Optional[Dict[int, np.ndarray]] = None

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, op: Op, parents: Sequence[Node], attrs: Dict[str, Any], value: np.ndarray, name=None) -> Node:
        node = Node(self, len(self.nodes), op, parents, attrs, value, name)
        self.nodes.append(node)
        self._forward_complete = False
        self._adjoints = None
        return node

    def input(self, name: str, value: Union[np.ndarray, float]) -> Node:
        """Declare a named differentiable input."""
        if name in self.inputs:
            raise ShapeError(f"Input '{name}' is already declared on this tape")
        node = self._append(Op.INPUT, (), {}, np.array(value, dtype=float), name)
        self.inputs[name] = node
        return node

    def constant(self, value: Union[np.ndarray, float]) -> Node:
        return self._append(Op.CONST, (), {}, np.asarray(value, dtype=float))

    def record(self, op: Op, parents: Sequence[Node], **attrs) -> Node:
        """Evaluate ``op`` on the parents' values and append the result."""
        for parent in parents:
            if parent.tape is not self:
                raise TapeStateError("Operands belong to different tapes")
        try:
            value = FORWARD[op]([p.value for p in parents], **attrs)
        except DomainError as e:
            raise DomainError(str(e), node=f"#{len(self.nodes)}:{op}") from e
        return self._append(op, parents, attrs, np.asarray(value, dtype=float))

    def set_output(self, node: Node) -> Node:
        if node.tape is not self:
            raise TapeStateError("Output node belongs to a different tape")
        self.output = node
        return node

    def forward(self, inputs: Optional[Mapping[str, Any]] = None) -> np.ndarray:
        """
        Evaluate the tape, optionally rebinding input values.

        With no rebinding the values recorded during construction are already
        current and are reused as is.

        Raises:
            ShapeError: unknown input name or a value of the wrong shape.
            DomainError: a node left its domain; the message names the node.
        """
        if self.output is None:
            raise TapeStateError("Tape has no declared output")
        self._adjoints = None
        if inputs:
            bound = {}
            for name, value in inputs.items():
                if name not in self.inputs:
                    raise ShapeError(f"Tape has no input named '{name}' (declared: {sorted(self.inputs)})")
                arr = np.array(value, dtype=float)
                declared = self.inputs[name].shape
                if arr.shape != declared:
                    raise ShapeError(f"Input '{name}' has shape {arr.shape}, tape declares {declared}")
                bound[name] = arr
            self._forward_complete = False
            for node in self.nodes[: self.output.index + 1]:
                if node.op == Op.INPUT:
                    if node.name in bound:
                        node.value = bound[node.name]
                elif node.op != Op.CONST:
                    try:
                        node.value = np.asarray(
                            FORWARD[node.op]([p.value for p in node.parents], **node.attrs), dtype=float
                        )
                    except DomainError as e:
                        raise DomainError(str(e), node=node.describe()) from e
        self._forward_complete = True
        return self.output.value

    def backward(self) -> Dict[str, np.ndarray]:
        """
        Reverse sweep from the scalar output.

        Returns:
            Gradient of the output with respect to every declared input.

        Raises:
            TapeStateError: the tape has not been forward-evaluated since it last changed.
        """
        if self.output is None or not self._forward_complete:
            raise TapeStateError("backward() called before forward()")
        out = self.output
        if out.value.size != 1:
            raise ShapeError(f"backward() needs a scalar output, got shape {out.shape}")

        adjoints: Dict[int, np.ndarray] = {out.index: np.ones_like(out.value)}
        for node in reversed(self.nodes[: out.index + 1]):
            grad = adjoints.get(node.index)
            if grad is None or not node.parents:
                continue
            contributions = BACKWARD[node.op](
                grad, [p.value for p in node.parents], node.value, **node.attrs
            )
            for parent, contribution in zip(node.parents, contributions):
                if not parent.requires_grad:
                    continue
                previous = adjoints.get(parent.index)
                adjoints[parent.index] = contribution if previous is None else previous + contribution
        self._adjoints = adjoints
        return {
            name: np.array(adjoints.get(node.index, np.zeros_like(node.value)), dtype=float)
            for name, node in self.inputs.items()
        }

    def adjoint(self, node: Node) -> np.ndarray:
        """Adjoint of any recorded node after a backward pass (zero if unreachable)."""
        if self._adjoints is None:
            raise TapeStateError("Adjoints are only defined after backward()")
        return self._adjoints.get(node.index, np.zeros_like(node.value))


def forward(tape: Tape, inputs: Optional[Mapping[str, Any]] = None) -> np.ndarray:
    return tape.forward(inputs)


def backward(tape: Tape) -> Dict[str, np.ndarray]:
    return tape.backward()
