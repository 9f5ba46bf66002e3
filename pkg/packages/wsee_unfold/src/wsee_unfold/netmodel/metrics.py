"""
Link-level quantities every solver and model evaluates.

All functions accept a single realization (``gains`` of shape ``(M, K, M)``,
``rho`` of shape ``(M, K)``) or a batch with leading axes, and accept tape
nodes for ``rho`` so the same expressions are differentiated during training.

Successive interference cancellation follows the direct gains: in cell ``m``,
user ``k`` sees intra-cell interference from every user ranked stronger than
itself. For SIC-ordered channels that is exactly the users ``j < k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from wsee_unfold.autodiff import functional as F
from wsee_unfold.core.exceptions import ShapeError
from wsee_unfold.netmodel.allocation import RhoLike, as_rho
from wsee_unfold.netmodel.channels import ChannelRealization, direct_gains
from wsee_unfold.netmodel.config import NetworkConfig

GainsLike = Union[ChannelRealization, np.ndarray]


def gain_array(G: GainsLike) -> np.ndarray:
    return G.gains if isinstance(G, ChannelRealization) else np.asarray(G, dtype=float)


def check_shapes(gains: np.ndarray, rho, cfg: NetworkConfig) -> None:
    M, K = cfg.shape
    if gains.shape[-3:] != (M, K, M):
        raise ShapeError(f"gains have trailing shape {gains.shape[-3:]}, config expects {(M, K, M)}")
    rho_shape = F.value(rho).shape
    if rho_shape[-2:] != (M, K):
        raise ShapeError(f"rho has trailing shape {rho_shape[-2:]}, config expects {(M, K)}")


def sic_rank(gains: np.ndarray) -> np.ndarray:
    """Decoding rank of each user in its cell (0 = strongest direct gain)."""
    order = np.argsort(-direct_gains(gains), axis=-1, kind="stable")
    return np.argsort(order, axis=-1, kind="stable")


def interference_mask(gains: np.ndarray) -> np.ndarray:
    """
    ``mask[..., m, k, n, j]`` is 1 when the signal for user ``(n, j)`` reaches
    user ``(m, k)`` as interference after SIC.
    """
    M = gains.shape[-1]
    rank = sic_rank(gains)
    other_cell = (~np.eye(M, dtype=bool))[:, None, :, None]
    stronger = rank[..., :, None] > rank[..., None, :]          # (..., M, K, K)
    same_cell = np.eye(M, dtype=bool)[:, None, :, None] & stronger[..., :, :, None, :]
    return other_cell | same_cell


def coupling_matrix(gains: np.ndarray) -> np.ndarray:
    """
    Interference coupling ``C`` of shape ``(..., MK, MK)`` with
    ``C[(m,k), (n,j)] = G[m, k, n]`` for every interfering pair and 0 otherwise,
    so that the received interference is ``P * C @ vec(rho)``.
    """
    M, K = gains.shape[-3], gains.shape[-2]
    coupled = gains[..., :, :, :, None] * interference_mask(gains)
    return coupled.reshape(gains.shape[:-3] + (M * K, M * K))


def _apply_coupling(coupling: np.ndarray, x, shape):
    lead = F.value(x).shape[:-2]
    flat = F.reshape(x, lead + (shape[0] * shape[1], 1))
    return F.reshape(coupling @ flat, lead + shape)


def signal_power(G: GainsLike, rho: RhoLike, cfg: NetworkConfig):
    """Received desired power ``G[m,k,m] * rho * P`` (W)."""
    gains = gain_array(G)
    rho = as_rho(rho)
    check_shapes(gains, rho, cfg)
    return (direct_gains(gains) * cfg.p_max) * rho


def interference(G: GainsLike, rho: RhoLike, cfg: NetworkConfig):
    """Residual intra-cell plus inter-cell interference after SIC (W, noise excluded)."""
    gains = gain_array(G)
    rho = as_rho(rho)
    check_shapes(gains, rho, cfg)
    return _apply_coupling(coupling_matrix(gains) * cfg.p_max, rho, cfg.shape)


def sinr(G: GainsLike, rho: RhoLike, cfg: NetworkConfig):
    """Post-SIC signal-to-interference-plus-noise ratio of every user."""
    return signal_power(G, rho, cfg) / (interference(G, rho, cfg) + cfg.noise_power)


def pre_sic_sinr(G: GainsLike, rho: RhoLike, cfg: NetworkConfig) -> np.ndarray:
    """SINR before any cancellation: every other co-cell user interferes. Used only to justify the ordering."""
    gains = gain_array(G)
    rho = np.asarray(F.value(as_rho(rho)))
    check_shapes(gains, rho, cfg)
    direct = direct_gains(gains) * cfg.p_max
    intra = direct * (rho.sum(axis=-1, keepdims=True) - rho)
    M = cfg.num_bs
    other = gains * (~np.eye(M, dtype=bool))[:, None, :]
    inter = np.einsum("...mkn,...n->...mk", other, rho.sum(axis=-1)) * cfg.p_max
    return direct * rho / (intra + inter + cfg.noise_power)


def rate(gamma, cfg: NetworkConfig):
    """Achievable rate ``B * log2(1 + gamma)`` (bit/s)."""
    return cfg.bandwidth * F.log2(1.0 + gamma)


def consumed_power(rho: RhoLike, cfg: NetworkConfig):
    """Transmit plus circuit power per user (W)."""
    return as_rho(rho) * cfg.p_max + cfg.circuit_power


def energy_efficiency(R, rho: RhoLike, cfg: NetworkConfig):
    """Per-user energy efficiency ``R / (rho * P_max + p_c)`` (bit/J)."""
    return R / consumed_power(rho, cfg)


def weighted_sum(values, cfg: NetworkConfig):
    """``sum_mk omega_mk * values_mk`` over the trailing two axes."""
    return F.reduce_sum(cfg.weight_matrix * values, axis=(-2, -1))


def wsee(G: GainsLike, rho: RhoLike, cfg: NetworkConfig):
    """Weighted sum energy efficiency (bit/J); one value per batch element."""
    R = rate(sinr(G, rho, cfg), cfg)
    return weighted_sum(energy_efficiency(R, rho, cfg), cfg)


@dataclass(frozen=True)
class LinkMetrics:
    sinr: np.ndarray
    rate: np.ndarray
    ee: np.ndarray
    wsee: float


def link_metrics(G: GainsLike, rho: RhoLike, cfg: NetworkConfig) -> LinkMetrics:
    """All link quantities of one realization at ``rho``."""
    rho = np.asarray(F.value(as_rho(rho)))
    gamma = sinr(G, rho, cfg)
    R = rate(gamma, cfg)
    eta = energy_efficiency(R, rho, cfg)
    return LinkMetrics(sinr=gamma, rate=R, ee=eta, wsee=float(weighted_sum(eta, cfg)))
