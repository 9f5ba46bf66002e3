"""
Static scenario parameters of a multi-cell downlink network.

All quantities are SI: watts, hertz, meters. The defaults reproduce the
desk-scale scenario (4 cells, 2 users per cell) with the link-budget figures
of the reference simulation setup.
"""
from __future__ import annotations

import hashlib
import math
from typing import List, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

THERMAL_NOISE_DBM_PER_HZ = -174.0
DEFAULT_NOISE_FIGURE_DB = 7.0
DEFAULT_BANDWIDTH_HZ = 250e3


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def dbw_to_watts(dbw: float) -> float:
    return 10.0 ** (dbw / 10.0)


def watts_to_dbw(watts: float) -> float:
    return 10.0 * math.log10(watts)


def noise_power_watts(
    bandwidth: float,
    density_dbm_per_hz: float = THERMAL_NOISE_DBM_PER_HZ,
    noise_figure_db: float = DEFAULT_NOISE_FIGURE_DB,
) -> float:
    """Receiver noise power: thermal density plus noise figure over the bandwidth."""
    return dbm_to_watts(density_dbm_per_hz + noise_figure_db + 10.0 * math.log10(bandwidth))


class NetworkConfig(BaseModel):
    """Scenario parameters; serializes to JSON with exactly these field names."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_bs: int = Field(default=4, ge=1, description="Number of base stations M (one cell each)")
    users_per_bs: int = Field(default=2, ge=1, description="Users per cell K")
    num_antennas: int = Field(default=8, ge=1, description="BS antennas N; fading gain is the norm of an N-vector")
    p_max: float = Field(default=0.1, gt=0, description="Per-BS transmit power budget P_max (W)")
    circuit_power: float = Field(default=0.1, gt=0, description="Per-user circuit power p_c (W)")
    bandwidth: float = Field(default=DEFAULT_BANDWIDTH_HZ, gt=0, description="Bandwidth B (Hz)")
    noise_power: float = Field(
        default_factory=lambda: noise_power_watts(DEFAULT_BANDWIDTH_HZ),
        gt=0,
        description="Noise power sigma^2 (W)",
    )
    weights: Union[float, List[List[float]]] = Field(
        default=1.0, description="Per-user weights omega, a scalar or an M x K table"
    )
    path_loss_exponent: float = Field(default=3.5, ge=0, description="Log-distance path-loss exponent")
    cell_radius: float = Field(default=500.0, gt=0, description="Cell radius (m)")
    rng_seed: int = Field(default=0, ge=0, description="Seed of the channel generator")
    fading_variance: float = Field(default=1.0, gt=0, description="Variance of each complex fading entry")
    min_distance: float = Field(default=10.0, gt=0, description="Minimum BS-user distance (m)")

    @field_validator("weights")
    @classmethod
    def _check_weights_finite(cls, v):
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("weights must be finite and non-negative")
        if not np.any(arr > 0):
            raise ValueError("at least one weight must be strictly positive")
        return v

    @model_validator(mode="after")
    def _check_weights_shape(self):
        arr = np.asarray(self.weights, dtype=float)
        if arr.ndim != 0 and arr.shape != (self.num_bs, self.users_per_bs):
            raise ValueError(
                f"weights table has shape {arr.shape}, expected ({self.num_bs}, {self.users_per_bs})"
            )
        return self

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_bs, self.users_per_bs)

    @property
    def num_links(self) -> int:
        return self.num_bs * self.users_per_bs

    @property
    def weight_matrix(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.weights, dtype=float), self.shape)

    def identity(self) -> str:
        """Stable digest of the serialized configuration."""
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()[:16]

    def with_p_max_dbw(self, p_max_dbw: float) -> "NetworkConfig":
        return self.model_copy(update={"p_max": dbw_to_watts(p_max_dbw)})
