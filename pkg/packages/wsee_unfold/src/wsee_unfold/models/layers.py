"""
Building blocks of the semi-unfolded model.

Feature maps are ``(..., C, H, W)`` arrays or tape nodes; for the gain image
``H = M*K`` (one row per user link) and ``W = M`` (one column per source BS).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Optional, Sequence, Tuple

import numpy as np

from wsee_unfold.autodiff import functional as F
from wsee_unfold.core.exceptions import InvalidInputError, ShapeError
from wsee_unfold.netmodel.allocation import PowerAllocation, budget_projection


@dataclass(frozen=True)
class FeatureMap:
    """A single ``C x H x W`` feature map."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 3:
            raise ShapeError(f"feature map must be C x H x W, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("feature map contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class AttentionBlockParams:
    w1: Any
    w2: Any
    w3: Any
    w_out: Any

    @classmethod
    def initial(cls, channels: int, rng: np.random.Generator, out_scale: float = 0.01) -> "AttentionBlockParams":
        scale = 0.1 / np.sqrt(channels)
        return cls(
            w1=rng.normal(0.0, scale, (channels, channels)),
            w2=rng.normal(0.0, scale, (channels, channels)),
            w3=rng.normal(0.0, scale, (channels, channels)),
            w_out=rng.normal(0.0, out_scale, (channels, channels)),
        )


@dataclass(frozen=True)
class FusionParams:
    w1: Any  # C x (n*C)
    w2: Any  # C x C


def _unwrap(x):
    return x.data if isinstance(x, FeatureMap) else x


def _rewrap(like, result):
    return FeatureMap(np.asarray(result)) if isinstance(like, FeatureMap) else result


def conv1x1(x, weight):
    """Pointwise convolution with a ``C_out x C_in`` kernel."""
    shape = F.value(x).shape
    lead, (c_in, h, w) = shape[:-3], shape[-3:]
    if F.value(weight).shape[-1] != c_in:
        raise ShapeError(f"1x1 kernel expects {F.value(weight).shape[-1]} channels, map has {c_in}")
    flat = F.reshape(x, lead + (c_in, h * w))
    out = weight @ flat
    return F.reshape(out, lead + (F.value(weight).shape[0], h, w))


@lru_cache(maxsize=32)
def im2col_index(height: int, width: int) -> np.ndarray:
    """
    Gather index for a 3x3, stride 1, zero-padded convolution.

    Entry ``t * H*W + p`` is the flattened source position of tap ``t`` for
    output position ``p``, or ``H*W`` (a zero column) outside the map.
    """
    rows, cols = np.divmod(np.arange(height * width), width)
    index = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            r, c = rows + di, cols + dj
            inside = (r >= 0) & (r < height) & (c >= 0) & (c < width)
            index.append(np.where(inside, r * width + c, height * width))
    out = np.concatenate(index)
    out.setflags(write=False)
    return out


def conv3x3(x, weight, bias):
    """
    3x3 convolution, stride 1, zero padding 1.

    Args:
        x: ``(..., C_in, H, W)`` map.
        weight: ``C_out x (C_in * 9)`` kernel, taps in row-major order per input channel.
        bias: ``C_out x 1``.
    """
    shape = F.value(x).shape
    lead, (c_in, h, w) = shape[:-3], shape[-3:]
    flat = F.reshape(x, lead + (c_in, h * w))
    padded = F.concat([flat, np.zeros(lead + (c_in, 1))], axis=-1)
    cols = F.gather(padded, im2col_index(h, w), axis=-1)
    cols = F.reshape(cols, lead + (c_in * 9, h * w))
    out = weight @ cols + bias
    return F.reshape(out, lead + (F.value(weight).shape[0], h, w))


def attention_scores(f_c, params: AttentionBlockParams):
    """Row-stochastic position-affinity matrix ``softmax(f1^T f2)`` of shape ``(..., P, P)``."""
    f_c = _unwrap(f_c)
    shape = F.value(f_c).shape
    lead, (c, h, w) = shape[:-3], shape[-3:]
    flat = F.reshape(f_c, lead + (c, h * w))
    f1 = params.w1 @ flat
    f2 = params.w2 @ flat
    return F.softmax(F.transpose(f1) @ f2)


def attention_block(f_c, params: AttentionBlockParams):
    """
    Non-local attention with a residual connection.

    ``f_s = softmax(f1^T f2)`` over the ``P = H*W`` positions calibrates
    ``f3``; the result goes through ``w_out`` and is added back to ``f_c``.
    """
    x = _unwrap(f_c)
    shape = F.value(x).shape
    lead, (c, h, w) = shape[:-3], shape[-3:]
    flat = F.reshape(x, lead + (c, h * w))
    f_s = attention_scores(x, params)
    f3 = params.w3 @ flat
    calibrated = F.transpose(f_s @ F.transpose(f3))  # (..., C, P)
    out = F.reshape(params.w_out @ calibrated, shape)
    return _rewrap(f_c, out + x)


def fuse_features(maps: Sequence, params: FusionParams):
    """Channel-concatenate ``maps`` and apply two successive 1x1 convolutions."""
    if not maps:
        raise InvalidInputError("fuse_features needs at least one map")
    raw = [_unwrap(m) for m in maps]
    spatial = {F.value(m).shape[-2:] for m in raw}
    if len(spatial) != 1:
        raise ShapeError(f"feature maps have unequal spatial dims: {sorted(spatial)}")
    stacked = F.concat(raw, axis=-3) if len(raw) > 1 else raw[0]
    out = conv1x1(conv1x1(stacked, params.w1), params.w2)
    return _rewrap(maps[0], out)


def refine_raw(p_att, p_main):
    """``project(sigmoid(s) * s)`` with ``s = p_att + p_main``; arrays or nodes."""
    s = p_att + p_main
    return budget_projection(F.sigmoid(s) * s)


def refine(p_att, p_main) -> PowerAllocation:
    return PowerAllocation(np.asarray(F.value(refine_raw(p_att, p_main))))


def apply_user_permutation(
    gains: np.ndarray, perm: np.ndarray, labels: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Reorder users inside every cell: ``G'[m, k] = G[m, perm[m, k]]``.

    ``perm`` has shape ``(..., M, K)``; ``labels`` (``(..., M, K)``) are reordered identically.
    """
    permuted = np.take_along_axis(gains, perm[..., None], axis=-2)
    permuted_labels = None if labels is None else np.take_along_axis(labels, perm, axis=-1)
    return permuted, permuted_labels


def invert_permutation(perm: np.ndarray) -> np.ndarray:
    return np.argsort(perm, axis=-1)


def random_user_permutations(rng: np.random.Generator, count: int, num_bs: int, users: int) -> np.ndarray:
    """``count`` independent per-cell permutations, shape ``(count, M, K)``."""
    return rng.permuted(np.broadcast_to(np.arange(users), (count, num_bs, users)).copy(), axis=-1)


@dataclass(frozen=True)
class AugmentedBatch:
    gains: np.ndarray
    labels: Optional[np.ndarray]
    perms: np.ndarray


def permutation_augment(
    G: np.ndarray,
    n_perms: int,
    rng: Optional[np.random.Generator] = None,
    labels: Optional[np.ndarray] = None,
) -> AugmentedBatch:
    """
    The identity arrangement of one realization plus ``n_perms - 1`` random
    per-cell user permutations, with labels permuted alike.
    """
    if n_perms < 1:
        raise InvalidInputError("n_perms must be at least 1")
    gains = np.asarray(G.gains if hasattr(G, "gains") else G, dtype=float)
    M, K = gains.shape[0], gains.shape[1]
    rng = rng or np.random.default_rng()
    identity = np.broadcast_to(np.arange(K), (1, M, K))
    perms = np.concatenate([identity, random_user_permutations(rng, n_perms - 1, M, K)], axis=0)
    batch, batch_labels = apply_user_permutation(
        np.broadcast_to(gains, (n_perms,) + gains.shape),
        perms,
        None if labels is None else np.broadcast_to(labels, (n_perms,) + labels.shape),
    )
    return AugmentedBatch(gains=batch, labels=batch_labels, perms=perms)
