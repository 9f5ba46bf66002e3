"""
Exception hierarchy shared by every wsee_unfold subpackage.

The CLI maps these onto exit codes: input problems (``InvalidInputError``,
``ShapeError``) exit with 1, everything else with 2.
"""
from __future__ import annotations

from typing import Optional, Tuple


class WseeUnfoldError(Exception):
    """Base class for all library errors."""


class ShapeError(WseeUnfoldError, ValueError):
    """Array dimensions disagree with each other or with the network configuration."""


class InvalidInputError(WseeUnfoldError, ValueError):
    """An input value is outside the domain accepted by an operation (NaN, empty dataset, ...)."""


class DomainError(WseeUnfoldError, ArithmeticError):
    """
    A mathematical function was evaluated outside its domain.

    Either ``node`` (an autodiff node description) or ``index`` (the offending
    ``(m, k)`` link) identifies where it happened.
    """

    def __init__(
        self,
        message: str,
        node: Optional[str] = None,
        index: Optional[Tuple[int, ...]] = None,
    ):
        self.node = node
        self.index = index
        where = []
        if node is not None:
            where.append(f"node {node}")
        if index is not None:
            where.append(f"link {index}")
        full = f"{message} ({', '.join(where)})" if where else message
        super().__init__(full)


class TapeStateError(WseeUnfoldError, RuntimeError):
    """A tape operation was requested in the wrong state (e.g. backward before forward)."""


class ModelNotTrainedError(WseeUnfoldError, RuntimeError):
    """An untrained model was passed where a trained one is required."""
