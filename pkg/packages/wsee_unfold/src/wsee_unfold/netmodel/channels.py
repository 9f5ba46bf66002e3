"""
Channel realizations: effective power gains for every BS-to-user link.

Gains are indexed ``G[m, k, n]``: user ``k`` served by BS ``m``, signal from
BS ``n``. Complex fading vectors are drawn and immediately reduced to their
squared norm, the only form any metric needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np

from wsee_unfold.core.exceptions import InvalidInputError, ShapeError
from wsee_unfold.netmodel.config import NetworkConfig


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of link gains. ``gains`` is read-only, shape ``(M, K, M)``."""

    gains: np.ndarray
    seed: Optional[int] = None
    config_ref: str = ""
    positions: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        gains = np.array(self.gains, dtype=float)
        if gains.ndim != 3 or gains.shape[0] != gains.shape[2]:
            raise ShapeError(f"gains must have shape (M, K, M), got {gains.shape}")
        if not np.all(np.isfinite(gains)) or np.any(gains <= 0):
            raise InvalidInputError("channel gains must be strictly positive and finite")
        gains.setflags(write=False)
        object.__setattr__(self, "gains", gains)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChannelRealization):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.config_ref == other.config_ref
            and np.array_equal(self.gains, other.gains)
        )

    @property
    def num_bs(self) -> int:
        return self.gains.shape[0]

    @property
    def users_per_bs(self) -> int:
        return self.gains.shape[1]

    @property
    def direct_gains(self) -> np.ndarray:
        """``G[m, k, m]`` as an ``(M, K)`` array."""
        return direct_gains(self.gains)

    def is_sic_ordered(self) -> bool:
        direct = self.direct_gains
        return bool(np.all(np.diff(direct, axis=1) <= 0))

    def check_matches(self, cfg: NetworkConfig) -> None:
        if (self.num_bs, self.users_per_bs) != cfg.shape:
            raise ShapeError(
                f"channel is {self.num_bs}x{self.users_per_bs} but config expects {cfg.num_bs}x{cfg.users_per_bs}"
            )

    def to_row(self) -> Dict[str, Any]:
        return {"seed": self.seed, "gains": self.gains.tolist()}

    @classmethod
    def from_row(cls, row: Dict[str, Any], config_ref: str = "") -> "ChannelRealization":
        return cls(gains=np.asarray(row["gains"], dtype=float), seed=row.get("seed"), config_ref=config_ref)


def direct_gains(gains: np.ndarray) -> np.ndarray:
    """Diagonal ``G[..., m, k, m]`` as ``(..., M, K)``."""
    return np.swapaxes(np.diagonal(gains, axis1=-3, axis2=-1), -1, -2)


def base_station_positions(num_bs: int, cell_radius: float) -> np.ndarray:
    """BS sites on a square grid with spacing of one cell diameter, shape ``(M, 2)``."""
    cols = math.ceil(math.sqrt(num_bs))
    idx = np.arange(num_bs)
    return np.stack([(idx % cols) * 2.0 * cell_radius, (idx // cols) * 2.0 * cell_radius], axis=-1)


def generate_channels(cfg: NetworkConfig, seed: Optional[int] = None) -> ChannelRealization:
    """
    Draw a channel realization for ``cfg``.

    Users are dropped uniformly in a disk of ``cell_radius`` around their BS
    (no closer than ``min_distance``). Each link gain is
    ``d ** -path_loss_exponent * ||h||^2`` with ``h`` an ``N``-vector of iid
    circularly-symmetric complex Gaussians of variance ``fading_variance``.
    Users are then sorted per cell by descending direct gain.

    Args:
        cfg: Scenario parameters.
        seed: Overrides ``cfg.rng_seed``; used by batch generation to partition seeds.

    Returns:
        A deterministic realization for the effective seed.
    """
    seed = cfg.rng_seed if seed is None else seed
    rng = np.random.default_rng(seed)
    M, K, N = cfg.num_bs, cfg.users_per_bs, cfg.num_antennas

    bs = base_station_positions(M, cfg.cell_radius)
    r_min, r_max = cfg.min_distance, max(cfg.cell_radius, cfg.min_distance)
    radius = np.sqrt(rng.uniform(r_min**2, r_max**2, size=(M, K)))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=(M, K))
    users = bs[:, None, :] + np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)

    distance = np.linalg.norm(users[:, :, None, :] - bs[None, None, :, :], axis=-1)
    distance = np.maximum(distance, cfg.min_distance)
    path_gain = distance ** (-cfg.path_loss_exponent)

    scale = math.sqrt(cfg.fading_variance / 2.0)
    h = scale * (rng.standard_normal((M, K, M, N)) + 1j * rng.standard_normal((M, K, M, N)))
    fading = np.sum(np.abs(h) ** 2, axis=-1)

    gains = path_gain * fading
    order = np.argsort(-direct_gains(gains), axis=-1, kind="stable")
    gains = np.take_along_axis(gains, order[..., None], axis=-2)
    users = np.take_along_axis(users, order[..., None], axis=-2)
    return ChannelRealization(gains=gains, seed=seed, config_ref=cfg.identity(), positions=users)


def partition_seeds(seed: int, count: int) -> list[int]:
    """Independent per-sample seeds derived from one root seed."""
    states = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [int(s) for s in states]


def generate_channel_batch(cfg: NetworkConfig, count: int, seed: Optional[int] = None) -> list[ChannelRealization]:
    """``count`` realizations with seeds partitioned from ``seed`` (default ``cfg.rng_seed``)."""
    root = cfg.rng_seed if seed is None else seed
    return [generate_channels(cfg, seed=s) for s in partition_seeds(root, count)]


def stack_gains(channels: Sequence[ChannelRealization]) -> np.ndarray:
    """Batch gains as ``(B, M, K, M)``."""
    if not channels:
        raise InvalidInputError("cannot stack an empty channel list")
    return np.stack([c.gains for c in channels])
