"""
Semi-unfolded model with multi-head attention over stage features.

Every stage mirrors one Algorithm 1 iteration: the auxiliary variables ``y``
and ``z`` are computed in closed form from the incoming rho, and a small
convolutional network replaces the numerical rho-step. Each stage adds an
increment to the running pre-activation ``p_main``, so stage ``s`` outputs
``refine(0, p_main)``. Stages listed in ``attention_positions`` also feed an
attention block; the attention maps are fused, pooled and mapped to
``p_att``, and the model output is ``refine(p_att, p_main)``.

The stage input is a 4-channel ``MK x M`` image: standardized log-gains, and
rho, y and z broadcast along the rows.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from wsee_unfold.autodiff import functional as F
from wsee_unfold.core.exceptions import InvalidInputError, ShapeError
from wsee_unfold.models.layers import (
    AttentionBlockParams,
    FusionParams,
    attention_block,
    conv3x3,
    fuse_features,
    refine_raw,
)
from wsee_unfold.models.training import IncrementalTrainer, TrainingData, TrainingOptions, TrainingResult
from wsee_unfold.netmodel.allocation import PowerAllocation, RhoLike, as_rho, uniform_allocation
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.netmodel.metrics import GainsLike, gain_array
from wsee_unfold.solvers.fp_numerical import objective_fp, update_y, update_z

INPUT_CHANNELS = 4
STAGE_FIELDS = ("conv_w", "conv_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b")
ATTENTION_FIELDS = ("w1", "w2", "w3", "w_out")


def inverse_refine(target: float) -> float:
    """The pre-activation ``s >= 0`` with ``sigmoid(s) * s == target``."""
    return float(brentq(lambda s: expit(s) * s - target, 0.0, max(10.0, 2.0 * target + 10.0)))


def parameter_shapes(
    cfg: NetworkConfig, num_stages: int, attention_positions: Tuple[int, ...], channels: int, hidden: int
) -> Dict[str, Tuple[int, ...]]:
    mk, m = cfg.num_links, cfg.num_bs
    shapes: Dict[str, Tuple[int, ...]] = {}
    for s in range(num_stages):
        shapes[f"stage{s}.conv_w"] = (channels, INPUT_CHANNELS * 9)
        shapes[f"stage{s}.conv_b"] = (channels, 1)
        shapes[f"stage{s}.fc1_w"] = (channels * mk * m, hidden)
        shapes[f"stage{s}.fc1_b"] = (hidden,)
        shapes[f"stage{s}.fc2_w"] = (hidden, mk)
        shapes[f"stage{s}.fc2_b"] = (mk,)
    for j in range(len(attention_positions)):
        for name in ATTENTION_FIELDS:
            shapes[f"att{j}.{name}"] = (channels, channels)
        shapes[f"fusion.w1.{j}"] = (channels, channels)
    if attention_positions:
        shapes["fusion.w2"] = (channels, channels)
        shapes["fc_att.w"] = (channels, mk)
        shapes["fc_att.b"] = (mk,)
    return shapes


@dataclass(frozen=True)
class MasumModel:
    """
    Parameters are held in one flat name -> array mapping; see
    ``parameter_shapes`` for the naming scheme.
    """

    cfg: NetworkConfig
    num_stages: int
    attention_positions: Tuple[int, ...]
    params: Dict[str, np.ndarray]
    channels: int = 8
    hidden: int = 0
    init_rho: Optional[PowerAllocation] = None
    trained: bool = False

    def __post_init__(self):
        positions = tuple(int(p) for p in self.attention_positions)
        if self.num_stages < 1:
            raise InvalidInputError("a MASUM model needs at least one stage")
        if len(set(positions)) != len(positions) or any(p < 0 or p >= self.num_stages for p in positions):
            raise InvalidInputError(f"attention positions {positions} must be distinct stages below {self.num_stages}")
        object.__setattr__(self, "attention_positions", tuple(sorted(positions)))
        if self.hidden <= 0:
            object.__setattr__(self, "hidden", 4 * self.cfg.num_links)
        if self.init_rho is None:
            object.__setattr__(self, "init_rho", uniform_allocation(self.cfg))
        expected = parameter_shapes(self.cfg, self.num_stages, self.attention_positions, self.channels, self.hidden)
        params = {}
        for name, shape in expected.items():
            if name not in self.params:
                raise ShapeError(f"MASUM parameter '{name}' is missing")
            arr = np.array(self.params[name], dtype=float)
            if arr.shape != shape:
                raise ShapeError(f"MASUM parameter '{name}' has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"MASUM parameter '{name}' is not finite")
            params[name] = arr
        unknown = set(self.params) - set(expected)
        if unknown:
            raise ShapeError(f"unknown MASUM parameters: {sorted(unknown)}")
        object.__setattr__(self, "params", params)

    @classmethod
    def initial(
        cls,
        cfg: NetworkConfig,
        num_stages: int = 5,
        attention_positions: Tuple[int, ...] = (3, 4),
        channels: int = 8,
        seed: int = 0,
    ) -> "MasumModel":
        """
        Random initialization. The first stage's output bias is set so that
        the untrained stage-0 allocation starts near the uniform ``1/(2K)``; later
        stages start with a zero output layer, as does the attention head.
        """
        rng = np.random.default_rng(seed)
        hidden = 4 * cfg.num_links
        shapes = parameter_shapes(cfg, num_stages, attention_positions, channels, hidden)
        params: Dict[str, np.ndarray] = {}
        for name, shape in shapes.items():
            field_name = name.split(".", 1)[1]
            if field_name in ("conv_b", "fc1_b", "fc2_b") or name == "fc_att.b":
                params[name] = np.zeros(shape)
            elif field_name in ("conv_w", "fc1_w"):
                params[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[-1] if field_name == "conv_w" else shape[0]), shape)
            elif field_name == "fc2_w":
                params[name] = rng.normal(0.0, 0.01, shape) if name.startswith("stage0.") else np.zeros(shape)
            elif name.startswith("att"):
                scale = 0.01 if field_name == "w_out" else 0.1 / np.sqrt(channels)
                params[name] = rng.normal(0.0, scale, shape)
            elif name.startswith("fusion.w1."):
                params[name] = np.eye(channels) / len(attention_positions)
            elif name == "fusion.w2":
                params[name] = np.eye(channels)
            else:
                params[name] = rng.normal(0.0, 0.01, shape)
        params["stage0.fc2_b"] = np.full(cfg.num_links, inverse_refine(1.0 / (2 * cfg.users_per_bs)))
        return cls(cfg=cfg, num_stages=num_stages, attention_positions=tuple(attention_positions),
                   params=params, channels=channels, hidden=hidden)

    @property
    def num_layers(self) -> int:
        return self.num_stages

    def parameters(self) -> Dict[str, np.ndarray]:
        return dict(self.params)

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "MasumModel":
        merged = dict(self.params)
        merged.update({k: np.asarray(v, dtype=float) for k, v in params.items()})
        return replace(self, params=merged)

    def constrain(self, params: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        return params

    def attention_index(self, depth: int) -> List[int]:
        """Indices of the attention blocks whose stage lies within ``depth``."""
        return [j for j, p in enumerate(self.attention_positions) if p < depth]

    def layer_names(self, index: int) -> List[str]:
        names = [f"stage{index}.{name}" for name in STAGE_FIELDS]
        for j, p in enumerate(self.attention_positions):
            if p == index:
                names += [f"att{j}.{name}" for name in ATTENTION_FIELDS] + [f"fusion.w1.{j}"]
        return names

    def shared_names(self, depth: int) -> List[str]:
        return ["fusion.w2", "fc_att.w", "fc_att.b"] if self.attention_index(depth) else []

    def grow_from(self, index: int) -> "MasumModel":
        """Copy stage ``index - 1`` into stage ``index`` with its output layer zeroed."""
        if index <= 0:
            return self
        params = dict(self.params)
        for name in STAGE_FIELDS:
            params[f"stage{index}.{name}"] = self.params[f"stage{index - 1}.{name}"].copy()
        params[f"stage{index}.fc2_w"] = np.zeros_like(params[f"stage{index}.fc2_w"])
        params[f"stage{index}.fc2_b"] = np.zeros_like(params[f"stage{index}.fc2_b"])
        return replace(self, params=params)

    def mark_trained(self) -> "MasumModel":
        return replace(self, trained=True)

    def training_loss(self, gains, params, depth, target_rho, lam, scale):
        rho_hat = masum_unrolled(self, gains, params, depth)
        return masum_loss(self, gains, rho_hat, target_rho, lam, scale)

    def predict(self, gains: np.ndarray, depth: Optional[int] = None) -> np.ndarray:
        return np.asarray(F.value(masum_unrolled(self, gains, depth=depth)))


def standardized_log_gains(gains: np.ndarray) -> np.ndarray:
    """Per-realization standardized ``log10`` gains, shaped ``(..., MK, M)``."""
    lg = np.log10(gains)
    axes = (-3, -2, -1)
    centred = lg - lg.mean(axis=axes, keepdims=True)
    spread = centred.std(axis=axes, keepdims=True)
    out = centred / np.where(spread > 0, spread, 1.0)
    return out.reshape(gains.shape[:-3] + (-1, gains.shape[-1]))


def _row_channel(x, lead, mk: int, m: int, normalize: bool):
    if normalize:
        peak = np.max(np.abs(F.value(x)), axis=(-2, -1), keepdims=True)
        x = x / np.where(peak > 0, peak, 1.0)
    column = F.reshape(x, lead + (1, mk, 1))
    return column * np.ones(m)


def feature_image(gains: np.ndarray, rho, y, z, cfg: NetworkConfig):
    """The ``(..., 4, MK, M)`` stage input."""
    lead = gains.shape[:-3]
    mk, m = cfg.num_links, cfg.num_bs
    log_gains = standardized_log_gains(gains).reshape(lead + (1, mk, m))
    return F.concat(
        [
            log_gains,
            _row_channel(rho, lead, mk, m, normalize=False),
            _row_channel(y, lead, mk, m, normalize=True),
            _row_channel(z, lead, mk, m, normalize=True),
        ],
        axis=-3,
    )


def _stage(gains, rho, params, s: int, cfg: NetworkConfig):
    lead = gains.shape[:-3]
    y = update_y(gains, rho, cfg)
    z = update_z(gains, rho, cfg)
    image = feature_image(gains, rho, y, z, cfg)
    f_c = F.silu(conv3x3(image, params[f"stage{s}.conv_w"], params[f"stage{s}.conv_b"]))
    flat = F.reshape(f_c, lead + (int(np.prod(F.value(f_c).shape[-3:])),))
    hidden = F.silu(flat @ params[f"stage{s}.fc1_w"] + params[f"stage{s}.fc1_b"])
    increment = hidden @ params[f"stage{s}.fc2_w"] + params[f"stage{s}.fc2_b"]
    return F.reshape(increment, lead + cfg.shape), f_c


def masum_unrolled(
    model: MasumModel,
    gains: np.ndarray,
    params: Optional[Mapping[str, object]] = None,
    depth: Optional[int] = None,
    rho_init: Optional[RhoLike] = None,
):
    """
    Run the first ``depth`` stages (and the attention blocks among them) on a
    ``(B, M, K, M)`` batch; parameters may be tape nodes.
    ``rho_init`` replaces the model's stored allocation as the rho entering stage 0.
    """
    params = params if params is not None else model.params
    depth = model.num_stages if depth is None else depth
    if gains.ndim != 4:
        raise ShapeError(f"masum_unrolled expects a (B, M, K, M) batch, got shape {gains.shape}")
    cfg = model.cfg
    lead = gains.shape[:-3]
    start = model.init_rho.rho if rho_init is None else np.asarray(as_rho(rho_init), dtype=float)
    if start.shape[-2:] != cfg.shape:
        raise ShapeError(f"rho_init has shape {start.shape}, expected {cfg.shape} per realization")
    rho = np.broadcast_to(start, lead + cfg.shape)
    p_main = np.zeros(lead + cfg.shape)
    attention_maps = []
    blocks = {p: j for j, p in enumerate(model.attention_positions)}
    for s in range(depth):
        increment, f_c = _stage(gains, rho, params, s, cfg)
        p_main = p_main + increment
        rho = refine_raw(0.0, p_main)
        if s in blocks:
            j = blocks[s]
            block = AttentionBlockParams(*(params[f"att{j}.{name}"] for name in ATTENTION_FIELDS))
            attention_maps.append((j, attention_block(f_c, block)))
    if not attention_maps:
        return rho

    present = [j for j, _ in attention_maps]
    w1 = F.concat([params[f"fusion.w1.{j}"] for j in present], axis=1) if len(present) > 1 else params[f"fusion.w1.{present[0]}"]
    fused = fuse_features([m for _, m in attention_maps], FusionParams(w1=w1, w2=params["fusion.w2"]))
    pooled = F.mean(fused, axis=(-2, -1))
    p_att = F.reshape(pooled @ params["fc_att.w"] + params["fc_att.b"], lead + cfg.shape)
    return refine_raw(p_att, p_main)


def _as_batch(G: GainsLike) -> Tuple[np.ndarray, bool]:
    gains = gain_array(G)
    return (gains[None], True) if gains.ndim == 3 else (gains, False)


def masum_forward(model: MasumModel, G: GainsLike, rho_init: Optional[RhoLike] = None) -> PowerAllocation:
    """Forward pass without a tape; accepts one realization or a batch."""
    gains, single = _as_batch(G)
    rho = np.asarray(F.value(masum_unrolled(model, gains, rho_init=rho_init)))
    return PowerAllocation(rho[0] if single else rho)


def masum_loss(
    model: MasumModel,
    G: GainsLike,
    rho_hat,
    rho_target: Optional[np.ndarray] = None,
    lam: float = 0.0,
    scale=1.0,
):
    """
    ``-objective_fp`` at the auxiliary optima of ``rho_hat`` (equal to
    ``-wsee``), scaled per sample and averaged, plus ``lam`` times the MSE to
    ``rho_target`` when given.
    """
    gains = gain_array(G)
    rho_hat = rho_hat.rho if isinstance(rho_hat, PowerAllocation) else rho_hat
    y = update_y(gains, rho_hat, model.cfg)
    z = update_z(gains, rho_hat, model.cfg)
    objective = objective_fp(gains, rho_hat, y, z, model.cfg)
    loss = F.mean(-(objective * scale))
    if rho_target is not None and lam != 0.0:
        diff = rho_hat - rho_target
        loss = loss + lam * F.mean(diff * diff)
    return loss


def masum_infer(
    model: MasumModel, G: GainsLike, rho_init: Optional[RhoLike] = None
) -> Tuple[PowerAllocation, float]:
    """Timed tape-free forward pass. For a batch the time is per instance."""
    gains, single = _as_batch(G)
    start = time.perf_counter()
    rho = np.asarray(F.value(masum_unrolled(model, gains, rho_init=rho_init)))
    elapsed = time.perf_counter() - start
    return PowerAllocation(rho[0] if single else rho), elapsed / gains.shape[0]


def masum_train(
    dataset,
    cfg: NetworkConfig,
    num_stages: int = 5,
    attention_positions: Tuple[int, ...] = (3, 4),
    channels: int = 8,
    options: Optional[TrainingOptions] = None,
    logger=None,
    show_progress: bool = False,
) -> TrainingResult:
    """Train a MASUM stage by stage with Adam, then jointly."""
    options = options or TrainingOptions(batch_size=128, optimizer="adam", learning_rate=1e-3)
    train = dataset if isinstance(dataset, TrainingData) else dataset.training_data("train")
    validation = None if isinstance(dataset, TrainingData) else dataset.training_data("validation")
    model = MasumModel.initial(cfg, num_stages, attention_positions, channels, seed=options.seed)
    return IncrementalTrainer(options, logger, show_progress).train(model, train, validation)
