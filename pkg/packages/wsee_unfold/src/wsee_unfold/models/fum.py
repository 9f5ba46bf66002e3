"""
Fully-unfolded model: Algorithm 2 unrolled into ``L`` layers.

Layer ``l`` runs one safeguarded closed-form iteration and then blends the
result with learnable biases::

    rho_out   = project((1 - alpha_rho) * rho_cf + alpha_rho * theta_rho)
    gamma_out = (1 - alpha_gamma) * gamma_cf + alpha_gamma * theta_gamma

With every ``alpha = 0`` the model reproduces the first ``L`` iterations of
Algorithm 2 from the same initialization.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from wsee_unfold.autodiff import functional as F
from wsee_unfold.core.exceptions import InvalidInputError, ShapeError
from wsee_unfold.models.optimizers import GradientDescent
from wsee_unfold.models.training import IncrementalTrainer, TrainingData, TrainingOptions, TrainingResult
from wsee_unfold.netmodel.allocation import PowerAllocation, budget_projection, uniform_allocation
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.netmodel.metrics import GainsLike, gain_array, sinr
from wsee_unfold.solvers.fp_closedform import CfState, closedform_step, objective_cf, update_z_cf
from wsee_unfold.solvers.fp_numerical import update_y
from wsee_unfold.solvers.options import SolverOptions

LAYER_FIELDS = ("alpha_rho", "theta_rho", "alpha_gamma", "theta_gamma")
DAMPING_FIELDS = ("alpha_rho", "alpha_gamma")


@dataclass(frozen=True)
class FumLayer:
    alpha_rho: np.ndarray
    theta_rho: np.ndarray
    alpha_gamma: np.ndarray
    theta_gamma: np.ndarray

    def __post_init__(self):
        for name in LAYER_FIELDS:
            arr = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"FUM layer field {name} is not finite")
            object.__setattr__(self, name, arr)
        for name in DAMPING_FIELDS:
            arr = getattr(self, name)
            if np.any(arr < 0) or np.any(arr > 1):
                raise InvalidInputError(f"FUM damping {name} must lie in [0, 1]")
        if np.any(self.theta_gamma < 0):
            raise InvalidInputError("FUM bias theta_gamma must be non-negative")

    @classmethod
    def initial(cls, cfg: NetworkConfig, alpha: float = 0.1) -> "FumLayer":
        shape = cfg.shape
        return cls(
            alpha_rho=np.full(shape, alpha),
            theta_rho=np.full(shape, 1.0 / (2 * cfg.users_per_bs)),
            alpha_gamma=np.full(shape, alpha),
            theta_gamma=np.ones(shape),
        )


@dataclass(frozen=True)
class FumModel:
    layers: Tuple[FumLayer, ...]
    cfg: NetworkConfig
    init_rho: PowerAllocation
    init_gamma: Optional[np.ndarray] = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    trained: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise InvalidInputError("a FUM model needs at least one layer")
        for layer in self.layers:
            if layer.alpha_rho.shape != self.cfg.shape:
                raise ShapeError(f"FUM layer shape {layer.alpha_rho.shape} differs from config {self.cfg.shape}")

    @classmethod
    def initial(cls, cfg: NetworkConfig, num_layers: int, alpha: float = 0.1, solver: Optional[SolverOptions] = None) -> "FumModel":
        return cls(
            layers=tuple(FumLayer.initial(cfg, alpha) for _ in range(num_layers)),
            cfg=cfg,
            init_rho=uniform_allocation(cfg),
            solver=solver or SolverOptions(),
        )

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def parameters(self) -> Dict[str, np.ndarray]:
        return {
            f"layer{i}.{name}": getattr(layer, name)
            for i, layer in enumerate(self.layers)
            for name in LAYER_FIELDS
        }

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "FumModel":
        layers = []
        for i, layer in enumerate(self.layers):
            values = {name: params.get(f"layer{i}.{name}", getattr(layer, name)) for name in LAYER_FIELDS}
            layers.append(FumLayer(**values))
        return replace(self, layers=tuple(layers))

    def constrain(self, params: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """Clamp damping to ``[0, 1]`` and ``theta_gamma`` to non-negative values."""
        out = dict(params)
        for name, value in params.items():
            field_name = name.split(".", 1)[1]
            if field_name in DAMPING_FIELDS:
                out[name] = np.clip(value, 0.0, 1.0)
            elif field_name == "theta_gamma":
                out[name] = np.maximum(value, 0.0)
        return out

    def layer_names(self, index: int) -> List[str]:
        return [f"layer{index}.{name}" for name in LAYER_FIELDS]

    def shared_names(self, depth: int) -> List[str]:
        return []

    def training_loss(self, gains, params, depth, target_rho, lam, scale):
        rho_hat, _ = unrolled_forward(self, gains, params, depth)
        return fum_loss(self, gains, rho_hat, target_rho, lam, scale)

    def predict(self, gains: np.ndarray, depth: Optional[int] = None) -> np.ndarray:
        rho, _ = unrolled_forward(self, gains, depth=depth)
        return np.asarray(F.value(rho))

    def grow_from(self, index: int) -> "FumModel":
        """Initialize layer ``index`` with the parameters of layer ``index - 1``."""
        if index <= 0:
            return self
        layers = list(self.layers)
        layers[index] = self.layers[index - 1]
        return replace(self, layers=tuple(layers))

    def mark_trained(self) -> "FumModel":
        return replace(self, trained=True)


def unrolled_forward(
    model: FumModel,
    gains: np.ndarray,
    params: Optional[Mapping[str, object]] = None,
    depth: Optional[int] = None,
):
    """
    Run the first ``depth`` layers; parameters may be tape nodes.

    Returns:
        ``(rho, gamma)`` after the last layer run (arrays or nodes).
    """
    params = params if params is not None else model.parameters()
    depth = model.num_layers if depth is None else depth
    cfg = model.cfg
    lead = gains.shape[:-3]
    rho = np.broadcast_to(model.init_rho.rho, lead + cfg.shape)
    gamma = model.init_gamma if model.init_gamma is not None else sinr(gains, rho, cfg)
    opts = model.solver
    for i in range(depth):
        z = update_z_cf(gains, rho, gamma, cfg, opts.variant)
        gamma_cf = sinr(gains, rho, cfg)
        y = update_y(gains, rho, cfg)
        step = closedform_step(
            gains, CfState(rho, gamma_cf, y, z), cfg, opts.objective_form, opts.variant, opts.cf_max_halvings
        )
        a_rho, t_rho = params[f"layer{i}.alpha_rho"], params[f"layer{i}.theta_rho"]
        a_gamma, t_gamma = params[f"layer{i}.alpha_gamma"], params[f"layer{i}.theta_gamma"]
        rho = budget_projection((1.0 - a_rho) * step.rho + a_rho * t_rho)
        gamma = (1.0 - a_gamma) * gamma_cf + a_gamma * t_gamma
    return rho, gamma


def fum_forward(model: FumModel, G: GainsLike) -> Tuple[PowerAllocation, np.ndarray]:
    """Forward pass without a tape; accepts one realization or a batch."""
    gains = gain_array(G)
    rho, gamma = unrolled_forward(model, gains)
    return PowerAllocation(np.asarray(F.value(rho))), np.asarray(F.value(gamma))


def tight_objective(gains: np.ndarray, rho, cfg: NetworkConfig, opts: SolverOptions):
    """objective_cf at the auxiliary optima of ``rho`` (equals wsee)."""
    gamma = sinr(gains, rho, cfg)
    z = update_z_cf(gains, rho, gamma, cfg, opts.variant)
    y = update_y(gains, rho, cfg)
    return objective_cf(gains, CfState(rho, gamma, y, z), cfg, opts.objective_form)


def supervised_term(rho_hat, rho_target):
    diff = rho_hat - rho_target
    return F.mean(diff * diff)


def fum_loss(
    model: FumModel,
    G: GainsLike,
    rho_hat,
    rho_target: Optional[np.ndarray] = None,
    lam: float = 0.0,
    scale=1.0,
):
    """
    ``-objective_cf`` at the tight state of ``rho_hat``, averaged over the
    batch after multiplying by ``scale`` (e.g. ``1 / target_wsee``), plus
    ``lam`` times the mean squared error to ``rho_target`` when given.
    """
    gains = gain_array(G)
    rho_hat = rho_hat.rho if isinstance(rho_hat, PowerAllocation) else rho_hat
    objective = tight_objective(gains, rho_hat, model.cfg, model.solver)
    loss = F.mean(-(objective * scale))
    if rho_target is not None and lam != 0.0:
        loss = loss + lam * supervised_term(rho_hat, rho_target)
    return loss


def fum_update(model: FumModel, grads: Mapping[str, np.ndarray], delta: float) -> Tuple[FumModel, int]:
    """
    One plain gradient-descent step on every layer field.

    Returns:
        The updated model and the number of parameters whose gradient
        contained NaN (those parameters are left unchanged).
    """
    params, rejected = GradientDescent(delta).step(model.parameters(), grads)
    return model.with_parameters(model.constrain(params)), rejected


def fum_infer(model: FumModel, G: GainsLike) -> Tuple[PowerAllocation, float]:
    """Timed tape-free forward pass. For a batch the time is per instance."""
    gains = gain_array(G)
    start = time.perf_counter()
    rho, _ = unrolled_forward(model, gains)
    elapsed = time.perf_counter() - start
    count = int(np.prod(gains.shape[:-3])) if gains.ndim > 3 else 1
    return PowerAllocation(np.asarray(rho)), elapsed / count


def resolve_training_data(source, split: str = "train") -> TrainingData:
    return source if isinstance(source, TrainingData) else source.training_data(split)


def fum_train_incremental(
    dataset,
    cfg: NetworkConfig,
    L: int,
    epochs: int,
    delta: float,
    batch_size: int = 64,
    options: Optional[TrainingOptions] = None,
    solver: Optional[SolverOptions] = None,
    logger=None,
    show_progress: bool = False,
) -> TrainingResult:
    """
    Train an ``L``-layer FUM layer by layer with plain gradient descent.

    ``dataset`` is a ``TrainingData`` or anything exposing ``training_data(split)``;
    the validation split, when present, drives the logged wsee ratio.
    """
    if L < 1:
        raise InvalidInputError("L must be at least 1")
    options = (options or TrainingOptions()).model_copy(
        update={"epochs_per_round": epochs, "learning_rate": delta, "batch_size": batch_size, "optimizer": "gd"}
    )
    train = resolve_training_data(dataset, "train")
    validation = None if isinstance(dataset, TrainingData) else dataset.training_data("validation")
    model = FumModel.initial(cfg, L, solver=solver)
    return IncrementalTrainer(options, logger, show_progress).train(model, train, validation)
