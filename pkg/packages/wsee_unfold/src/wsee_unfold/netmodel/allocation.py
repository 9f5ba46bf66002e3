"""Power allocation coefficients and the projection onto the per-BS budget."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from wsee_unfold.autodiff import functional as F
from wsee_unfold.autodiff.tape import Node
from wsee_unfold.core.exceptions import InvalidInputError, ShapeError
from wsee_unfold.netmodel.config import NetworkConfig

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class PowerAllocation:
    """
    Fractions of each BS's budget given to its users.

    ``rho`` has shape ``(M, K)`` (or ``(B, M, K)`` for a batch), entries in
    ``[0, 1]`` and per-BS row sums at most 1.
    """

    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        if rho.ndim < 2:
            raise ShapeError(f"rho must be at least 2-D (M, K), got shape {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise InvalidInputError("rho contains non-finite entries")
        if np.any(rho < -FEASIBILITY_TOL) or np.any(rho > 1 + FEASIBILITY_TOL):
            raise InvalidInputError("rho entries must lie in [0, 1]")
        if np.any(rho.sum(axis=-1) > 1 + FEASIBILITY_TOL):
            raise InvalidInputError("per-BS budget exceeded: some row of rho sums above 1")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PowerAllocation):
            return NotImplemented
        return np.array_equal(self.rho, other.rho)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.rho.shape

    def to_list(self) -> list:
        return self.rho.tolist()


RhoLike = Union[PowerAllocation, np.ndarray, Node]


def as_rho(rho: RhoLike):
    """Raw coefficients of ``rho`` (array or tape node)."""
    return rho.rho if isinstance(rho, PowerAllocation) else rho


def budget_projection(x):
    """
    Clamp to ``[0, 1]`` then rescale any row summing above 1.

    Works on arrays and tape nodes; feasible input passes through unchanged.
    """
    clipped = F.clamp(x, 0.0, 1.0)
    totals = F.reduce_sum(clipped, axis=-1, keepdims=True)
    return clipped / F.clamp(totals, 1.0, None)


def project_feasible(rho_raw: Union[np.ndarray, Sequence], cfg: Optional[NetworkConfig] = None) -> PowerAllocation:
    """
    Map arbitrary finite coefficients onto the feasible set.

    Raises:
        InvalidInputError: ``rho_raw`` contains NaN.
        ShapeError: the trailing dimensions disagree with ``cfg``.
    """
    raw = np.asarray(F.value(as_rho(rho_raw)), dtype=float)
    if np.any(np.isnan(raw)):
        raise InvalidInputError("project_feasible received NaN coefficients")
    if cfg is not None and raw.shape[-2:] != cfg.shape:
        raise ShapeError(f"rho has trailing shape {raw.shape[-2:]}, config expects {cfg.shape}")
    return PowerAllocation(budget_projection(raw))


def uniform_allocation(cfg: NetworkConfig, batch_shape: tuple[int, ...] = ()) -> PowerAllocation:
    """Every user gets ``1 / (2K)`` of its BS budget."""
    return PowerAllocation(np.full(batch_shape + cfg.shape, 1.0 / (2 * cfg.users_per_bs)))


def random_feasible_allocation(cfg: NetworkConfig, rng: np.random.Generator) -> PowerAllocation:
    """
    Random interior allocation: per BS, a flat Dirichlet draw over the K users
    plus one slack share that is left unused.
    """
    shares = rng.dirichlet(np.ones(cfg.users_per_bs + 1), size=cfg.num_bs)
    return PowerAllocation(shares[:, : cfg.users_per_bs])
