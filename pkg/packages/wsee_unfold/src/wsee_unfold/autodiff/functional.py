"""
Array operations that work on plain numpy values and on tape nodes alike.

When any operand is a ``Node`` the operation is recorded on that node's tape;
otherwise it is evaluated directly with the same kernel. Model and solver code
is written once against these functions and runs with or without a tape.
"""
from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from wsee_unfold.autodiff.primitives import FORWARD, Op
from wsee_unfold.autodiff.tape import Node, Tape
from wsee_unfold.core.exceptions import TapeStateError

ArrayLike = Union[np.ndarray, float, Node]


def is_node(x) -> bool:
    return isinstance(x, Node)


def value(x: ArrayLike) -> np.ndarray:
    """The numeric payload of ``x`` (the node value, or ``x`` itself)."""
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=float)


def _tape_of(args: Sequence[ArrayLike]) -> Optional[Tape]:
    tape = None
    for arg in args:
        if isinstance(arg, Node):
            if tape is None:
                tape = arg.tape
            elif arg.tape is not tape:
                raise TapeStateError("Operands belong to different tapes")
    return tape


def _apply(op: Op, args: Sequence[ArrayLike], **attrs):
    tape = _tape_of(args)
    if tape is None:
        return FORWARD[op]([np.asarray(a, dtype=float) for a in args], **attrs)
    parents = [a if isinstance(a, Node) else tape.constant(a) for a in args]
    return tape.record(op, parents, **attrs)


def add(a: ArrayLike, b: ArrayLike):
    return _apply(Op.ADD, (a, b))


def sub(a: ArrayLike, b: ArrayLike):
    return _apply(Op.SUB, (a, b))


def mul(a: ArrayLike, b: ArrayLike):
    return _apply(Op.MUL, (a, b))


def div(a: ArrayLike, b: ArrayLike):
    return _apply(Op.DIV, (a, b))


def neg(a: ArrayLike):
    return _apply(Op.NEG, (a,))


def sqrt(a: ArrayLike):
    return _apply(Op.SQRT, (a,))


def log2(a: ArrayLike):
    return _apply(Op.LOG2, (a,))


def exp(a: ArrayLike):
    return _apply(Op.EXP, (a,))


def sigmoid(a: ArrayLike):
    return _apply(Op.SIGMOID, (a,))


def silu(a: ArrayLike):
    return mul(a, sigmoid(a))


def matmul(a: ArrayLike, b: ArrayLike):
    return _apply(Op.MATMUL, (a, b))


def softmax(a: ArrayLike):
    """Softmax over the last axis."""
    return _apply(Op.SOFTMAX, (a,))


def reduce_sum(a: ArrayLike, axis=None, keepdims: bool = False):
    return _apply(Op.SUM, (a,), axis=axis, keepdims=keepdims)


def mean(a: ArrayLike, axis=None, keepdims: bool = False):
    shape = value(a).shape
    axes = range(len(shape)) if axis is None else ((axis,) if isinstance(axis, int) else axis)
    count = int(np.prod([shape[ax] for ax in axes]))
    return div(reduce_sum(a, axis=axis, keepdims=keepdims), float(count))


def clamp(a: ArrayLike, lo: Optional[float] = None, hi: Optional[float] = None):
    """Clip to ``[lo, hi]``; gradient 1 inside and on the boundary, 0 outside."""
    return _apply(Op.CLAMP, (a,), lo=lo, hi=hi)


def reshape(a: ArrayLike, shape: Sequence[int]):
    return _apply(Op.RESHAPE, (a,), shape=tuple(shape))


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None):
    """Permute axes; the default swaps the last two (batched matrix transpose)."""
    if axes is None:
        ndim = value(a).ndim
        axes = tuple(range(ndim - 2)) + (ndim - 1, ndim - 2)
    return _apply(Op.TRANSPOSE, (a,), axes=tuple(axes))


def concat(parts: Sequence[ArrayLike], axis: int = 0):
    return _apply(Op.CONCAT, tuple(parts), axis=axis)


def gather(a: ArrayLike, index: np.ndarray, axis: int = -1):
    """Select entries of ``a`` along ``axis`` by a 1-D integer index (repeats allowed)."""
    return _apply(Op.GATHER, (a,), index=np.asarray(index, dtype=np.intp), axis=axis)
