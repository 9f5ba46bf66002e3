"""
Forward and backward kernels of every tape primitive.

Each primitive is a pair registered in ``FORWARD`` and ``BACKWARD``:

* forward ``f(values, **attrs) -> ndarray``
* backward ``b(grad, values, out, **attrs) -> list[ndarray]`` (one adjoint
  contribution per parent, already reduced to the parent's shape)

The eager numpy path in ``functional`` calls the same forward kernels, which
keeps taped and untaped evaluations bit-identical.
"""
from __future__ import annotations

from enum import StrEnum, auto
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import expit, softmax as _softmax

from wsee_unfold.core.exceptions import DomainError, ShapeError

_LN2 = np.log(2.0)


class Op(StrEnum):
    INPUT = auto()
    CONST = auto()
    ADD = auto()
    SUB = auto()
    MUL = auto()
    DIV = auto()
    NEG = auto()
    SQRT = auto()
    LOG2 = auto()
    EXP = auto()
    SIGMOID = auto()
    MATMUL = auto()
    SOFTMAX = auto()
    SUM = auto()
    CLAMP = auto()
    RESHAPE = auto()
    TRANSPOSE = auto()
    CONCAT = auto()
    GATHER = auto()


ForwardFn = Callable[..., np.ndarray]
BackwardFn = Callable[..., List[np.ndarray]]

FORWARD: Dict[Op, ForwardFn] = {}
BACKWARD: Dict[Op, BackwardFn] = {}


def _register(op: Op):
    def wrap(pair):
        FORWARD[op], BACKWARD[op] = pair()
        return pair
    return wrap


def unbroadcast(grad: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Sum ``grad`` over the axes numpy broadcast to reach its shape from ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _normalize_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


@_register(Op.ADD)
def _add():
    def fwd(values):
        return np.add(values[0], values[1])

    def bwd(grad, values, out):
        return [unbroadcast(grad, values[0].shape), unbroadcast(grad, values[1].shape)]
    return fwd, bwd


@_register(Op.SUB)
def _sub():
    def fwd(values):
        return np.subtract(values[0], values[1])

    def bwd(grad, values, out):
        return [unbroadcast(grad, values[0].shape), unbroadcast(-grad, values[1].shape)]
    return fwd, bwd


@_register(Op.MUL)
def _mul():
    def fwd(values):
        return np.multiply(values[0], values[1])

    def bwd(grad, values, out):
        a, b = values
        return [unbroadcast(grad * b, a.shape), unbroadcast(grad * a, b.shape)]
    return fwd, bwd


@_register(Op.DIV)
def _div():
    def fwd(values):
        return np.divide(values[0], values[1])

    def bwd(grad, values, out):
        a, b = values
        return [unbroadcast(grad / b, a.shape), unbroadcast(-grad * a / (b * b), b.shape)]
    return fwd, bwd


@_register(Op.NEG)
def _neg():
    def fwd(values):
        return np.negative(values[0])

    def bwd(grad, values, out):
        return [-grad]
    return fwd, bwd


@_register(Op.SQRT)
def _sqrt():
    def fwd(values):
        x = values[0]
        if np.any(x < 0):
            raise DomainError(f"sqrt of negative value (min {np.min(x):.3e})")
        return np.sqrt(x)

    def bwd(grad, values, out):
        # derivative at 0 is taken as 0
        local = np.divide(0.5, out, out=np.zeros_like(out), where=out > 0)
        return [grad * local]
    return fwd, bwd


@_register(Op.LOG2)
def _log2():
    def fwd(values):
        x = values[0]
        if np.any(x <= 0):
            raise DomainError(f"log2 of non-positive value (min {np.min(x):.3e})")
        return np.log2(x)

    def bwd(grad, values, out):
        return [grad / (values[0] * _LN2)]
    return fwd, bwd


@_register(Op.EXP)
def _exp():
    def fwd(values):
        return np.exp(values[0])

    def bwd(grad, values, out):
        return [grad * out]
    return fwd, bwd


@_register(Op.SIGMOID)
def _sigmoid():
    def fwd(values):
        return expit(values[0])

    def bwd(grad, values, out):
        return [grad * out * (1.0 - out)]
    return fwd, bwd


@_register(Op.MATMUL)
def _matmul():
    def fwd(values):
        a, b = values
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
        return np.matmul(a, b)

    def bwd(grad, values, out):
        a, b = values
        ga = np.matmul(grad, np.swapaxes(b, -1, -2))
        gb = np.matmul(np.swapaxes(a, -1, -2), grad)
        return [unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)]
    return fwd, bwd


@_register(Op.SOFTMAX)
def _softmax_pair():
    def fwd(values):
        return _softmax(values[0], axis=-1)

    def bwd(grad, values, out):
        return [out * (grad - np.sum(grad * out, axis=-1, keepdims=True))]
    return fwd, bwd


@_register(Op.SUM)
def _sum():
    def fwd(values, axis=None, keepdims=False):
        return np.sum(values[0], axis=axis, keepdims=keepdims)

    def bwd(grad, values, out, axis=None, keepdims=False):
        x = values[0]
        if not keepdims:
            grad = np.expand_dims(grad, _normalize_axes(axis, x.ndim))
        return [np.broadcast_to(grad, x.shape)]
    return fwd, bwd


@_register(Op.CLAMP)
def _clamp():
    def fwd(values, lo: Optional[float] = None, hi: Optional[float] = None):
        x = values[0]
        if lo is not None:
            x = np.maximum(x, lo)
        if hi is not None:
            x = np.minimum(x, hi)
        return x

    def bwd(grad, values, out, lo=None, hi=None):
        x = values[0]
        mask = np.ones(x.shape, dtype=bool)
        if lo is not None:
            mask &= x >= lo
        if hi is not None:
            mask &= x <= hi
        return [grad * mask]
    return fwd, bwd


@_register(Op.RESHAPE)
def _reshape():
    def fwd(values, shape):
        return np.reshape(values[0], shape)

    def bwd(grad, values, out, shape):
        return [np.reshape(grad, values[0].shape)]
    return fwd, bwd


@_register(Op.TRANSPOSE)
def _transpose():
    def fwd(values, axes):
        return np.transpose(values[0], axes)

    def bwd(grad, values, out, axes):
        return [np.transpose(grad, np.argsort(axes))]
    return fwd, bwd


@_register(Op.CONCAT)
def _concat():
    def fwd(values, axis):
        return np.concatenate(values, axis=axis)

    def bwd(grad, values, out, axis):
        cuts = np.cumsum([v.shape[axis] for v in values])[:-1]
        return list(np.split(grad, cuts, axis=axis))
    return fwd, bwd


@_register(Op.GATHER)
def _gather():
    def fwd(values, index, axis):
        return np.take(values[0], index, axis=axis)

    def bwd(grad, values, out, index, axis):
        x = values[0]
        gx = np.zeros_like(x)
        np.add.at(np.moveaxis(gx, axis, 0), index, np.moveaxis(grad, axis, 0))
        return [gx]
    return fwd, bwd
