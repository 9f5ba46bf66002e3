"""Minimal reverse-mode automatic differentiation on expression tapes."""
from __future__ import annotations

from wsee_unfold.autodiff.gradcheck import grad_check
from wsee_unfold.autodiff.primitives import Op
from wsee_unfold.autodiff.tape import Node, Tape, backward, forward

__all__ = ["Node", "Op", "Tape", "backward", "forward", "grad_check"]
