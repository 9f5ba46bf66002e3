"""
Incremental (layer-by-layer) training shared by both unfolded models.

Round ``r`` trains a model of depth ``r + 1``: the new layer is initialized
from the previous one and only its parameters (plus any shared output heads)
are updated. When the model has more than one layer a final round trains
every parameter jointly at full depth.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Literal, Mapping, Optional, Protocol, Sequence

import loguru as lg
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm.auto import tqdm

from wsee_unfold.autodiff.tape import Tape
from wsee_unfold.core.exceptions import DomainError, InvalidInputError, ShapeError
from wsee_unfold.models.layers import apply_user_permutation, random_user_permutations
from wsee_unfold.models.optimizers import Adam, GradientDescent, Optimizer
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.netmodel.metrics import wsee


class TrainingOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs_per_round: int = Field(default=3, ge=1, description="Epochs spent on each newly added layer")
    final_epochs: int = Field(default=5, ge=0, description="Epochs of the joint fine-tuning round")
    batch_size: int = Field(default=64, ge=1, description="Mini-batch size")
    learning_rate: float = Field(default=1e-3, gt=0, description="Step size (delta for gradient descent)")
    optimizer: Literal["gd", "adam"] = Field(default="adam", description="Parameter update rule")
    supervised_weight: float = Field(default=0.0, ge=0, description="Weight lambda of the MSE term")
    normalize_loss: bool = Field(default=True, description="Divide each sample's objective by its target wsee")
    n_perms: int = Field(default=1, ge=1, description="Copies per sample under random user permutations")
    seed: int = Field(default=0, description="Seed for shuffling and permutation draws")


@dataclass(frozen=True)
class TrainingData:
    """Labelled realizations: gains ``(N, M, K, M)``, rho ``(N, M, K)``, wsee ``(N,)``."""

    gains: np.ndarray
    target_rho: np.ndarray
    target_wsee: np.ndarray

    def __post_init__(self):
        n = self.gains.shape[0]
        if self.gains.ndim != 4 or self.target_rho.shape != self.gains.shape[:3]:
            raise ShapeError(
                f"training gains {self.gains.shape} and labels {self.target_rho.shape} do not match"
            )
        if self.target_wsee.shape != (n,):
            raise ShapeError(f"expected {n} target wsee values, got shape {self.target_wsee.shape}")

    def __len__(self) -> int:
        return self.gains.shape[0]

    def subset(self, index: Sequence[int]) -> "TrainingData":
        index = np.asarray(index, dtype=np.intp)
        return TrainingData(self.gains[index], self.target_rho[index], self.target_wsee[index])


class TrainingSource(Protocol):
    def training_data(self, split: str) -> TrainingData: ...


class UnfoldedModel(Protocol):
    cfg: NetworkConfig

    @property
    def num_layers(self) -> int: ...

    def parameters(self) -> Dict[str, np.ndarray]: ...

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "UnfoldedModel": ...

    def constrain(self, params: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]: ...

    def layer_names(self, index: int) -> List[str]: ...

    def shared_names(self, depth: int) -> List[str]: ...

    def grow_from(self, index: int) -> "UnfoldedModel": ...

    def training_loss(self, gains, params, depth, target_rho, lam, scale): ...

    def predict(self, gains: np.ndarray, depth: Optional[int] = None) -> np.ndarray: ...

    def mark_trained(self) -> "UnfoldedModel": ...


@dataclass(frozen=True)
class TrainingLogRow:
    round: int
    epoch: int
    loss: float
    wsee_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingResult:
    model: UnfoldedModel
    log: List[TrainingLogRow] = field(default_factory=list)
    rejected_gradients: int = 0
    skipped_batches: int = 0

    @property
    def final_ratio(self) -> float:
        return self.log[-1].wsee_ratio if self.log else math.nan


def achieved_ratio(model: UnfoldedModel, data: TrainingData, depth: Optional[int] = None) -> float:
    """Mean of ``wsee(model) / wsee(target)`` over ``data``."""
    rho = model.predict(data.gains, depth)
    achieved = np.asarray(wsee(data.gains, rho, model.cfg))
    return float(np.mean(achieved / data.target_wsee))


def make_optimizer(options: TrainingOptions) -> Optimizer:
    if options.optimizer == "gd":
        return GradientDescent(options.learning_rate)
    return Adam(options.learning_rate)


class IncrementalTrainer:
    """Runs the layer-by-layer protocol with mini-batch updates."""

    def __init__(
        self,
        options: Optional[TrainingOptions] = None,
        logger: Optional[lg.Logger] = None,
        show_progress: bool = False,
    ):
        self.options = options or TrainingOptions()
        self.show_progress = show_progress
        self.logger = (logger or lg.logger).bind(component="training")
        self.rng = np.random.default_rng(self.options.seed)

    def train(
        self,
        model: UnfoldedModel,
        train: TrainingData,
        validation: Optional[TrainingData] = None,
    ) -> TrainingResult:
        if len(train) == 0:
            raise InvalidInputError("training set is empty")
        result = TrainingResult(model=model)
        monitor = validation if validation is not None and len(validation) else train
        num_layers = model.num_layers

        for round_index in range(num_layers):
            model = model.grow_from(round_index)
            depth = round_index + 1
            names = model.layer_names(round_index) + model.shared_names(depth)
            self.logger.info(f"Round {round_index}: training depth {depth} ({len(names)} tensors)")
            model = self._run_round(model, train, monitor, names, depth, round_index,
                                    self.options.epochs_per_round, result)

        if num_layers > 1 and self.options.final_epochs > 0:
            self.logger.info(f"Joint round: fine-tuning all {num_layers} layers")
            model = self._run_round(model, train, monitor, list(model.parameters()), num_layers,
                                    num_layers, self.options.final_epochs, result)

        result.model = model.mark_trained()
        return result

    def _run_round(self, model, train, monitor, names, depth, round_index, epochs, result):
        optimizer = make_optimizer(self.options)
        label = f"Round {round_index}" if depth == round_index + 1 else "Joint round"
        for epoch in tqdm(range(epochs), desc=label, unit="epoch", leave=False, disable=not self.show_progress):
            losses = []
            order = self.rng.permutation(len(train))
            for start in range(0, len(train), self.options.batch_size):
                batch = train.subset(order[start : start + self.options.batch_size])
                step = self._train_step(model, batch, names, depth, optimizer, result)
                if step is None:
                    continue
                model, loss = step
                losses.append(loss)
            ratio = achieved_ratio(model, monitor, depth)
            epoch_loss = float(np.mean(losses)) if losses else math.nan
            result.log.append(TrainingLogRow(round_index, epoch, epoch_loss, ratio))
            self.logger.debug(f"round {round_index} epoch {epoch}: loss={epoch_loss:.6g} wsee_ratio={ratio:.4f}")
        return model

    def _augment(self, batch: TrainingData) -> TrainingData:
        extra = self.options.n_perms - 1
        if extra == 0:
            return batch
        n, M, K = batch.target_rho.shape
        gains, labels = [batch.gains], [batch.target_rho]
        for _ in range(extra):
            perms = random_user_permutations(self.rng, n, M, K)
            g, r = apply_user_permutation(batch.gains, perms, batch.target_rho)
            gains.append(g)
            labels.append(r)
        return TrainingData(
            np.concatenate(gains), np.concatenate(labels), np.tile(batch.target_wsee, extra + 1)
        )

    def _train_step(self, model, batch, names, depth, optimizer, result):
        batch = self._augment(batch)
        params = model.parameters()
        tape = Tape()
        nodes = {name: tape.input(name, params[name]) for name in names}
        scale = 1.0 / batch.target_wsee if self.options.normalize_loss else 1.0
        try:
            loss = model.training_loss(
                batch.gains, {**params, **nodes}, depth, batch.target_rho,
                self.options.supervised_weight, scale,
            )
            tape.set_output(loss)
            value = float(tape.forward())
            grads = tape.backward()
        except DomainError as e:
            result.skipped_batches += 1
            self.logger.warning(f"Skipping batch: {e}")
            return None
        if not math.isfinite(value):
            result.skipped_batches += 1
            self.logger.warning("Skipping batch with non-finite loss")
            return None

        updated, rejected = optimizer.step({name: params[name] for name in names}, grads)
        if rejected:
            result.rejected_gradients += rejected
            self.logger.warning(f"Rejected {rejected} NaN gradient(s)")
        params.update(updated)
        return model.with_parameters(model.constrain(params)), value
