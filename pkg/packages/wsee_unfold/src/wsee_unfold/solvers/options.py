from __future__ import annotations

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field


class ObjectiveForm(str, Enum):
    """How the closed-form objective composes ``y`` with the transformed rate."""
    SQRT = "sqrt"      # 2*y*sqrt(R) - y^2*D, tight at the auxiliary optima
    LINEAR = "linear"  # 2*y*R - y^2*D, not tight; kept as an alternative


class ClosedFormVariant(str, Enum):
    """Which rho update the closed-form solver applies."""
    DERIVED = "derived"  # stationary point of the objective, Jacobi cross-coupling
    PRINTED = "printed"  # literal update without the tightness correction, comparison only


class SolverAlgorithm(str, Enum):
    NUMERICAL = "fp"   # Algorithm 1, numerically solved rho-step
    CLOSED_FORM = "cf" # Algorithm 2, closed-form rho-step


class SolverOptions(BaseModel):
    """Tolerances and iteration limits shared by both solvers."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon: float = Field(
        default=1e-4,
        gt=0,
        description="Stop when |f(t) - f(t-1)| < epsilon * max(1, |f(t-1)|)",
    )
    max_outer_iters: int = Field(default=100, ge=1, description="Outer iteration cap")
    inner_step: float = Field(default=0.1, gt=0, description="Initial step of the projected-gradient rho-step")
    inner_iters: int = Field(default=200, ge=1, description="Iteration cap of the projected-gradient rho-step")
    inner_tol: float = Field(
        default=1e-6, gt=0, description="Projected-gradient norm (normalized by |f|+1) that ends the rho-step"
    )
    max_halvings: int = Field(default=40, ge=1, description="Backtracking halvings before a line search gives up")
    rho_floor: float = Field(
        default=1e-9, ge=0, description="Lower bound kept on rho inside the numerical rho-step"
    )
    cf_max_halvings: int = Field(
        default=20, ge=0, description="Halvings of the safeguarded closed-form step before it stalls"
    )
    objective_form: ObjectiveForm = Field(default=ObjectiveForm.SQRT, description="Closed-form objective composition")
    variant: ClosedFormVariant = Field(default=ClosedFormVariant.DERIVED, description="Closed-form rho update")
