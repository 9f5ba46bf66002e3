"""
Experiments: P_max sweep, off-training evaluation, inference timing,
layer/attention ablations and solver convergence traces.

"Accuracy" everywhere is the achieved-WSEE ratio times 100: the scheme's
wsee divided by a reference wsee on the same channels.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import loguru as lg
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from threadpoolctl import threadpool_limits
from tqdm.auto import tqdm

from wsee_unfold.core.exceptions import InvalidInputError, ModelNotTrainedError
from wsee_unfold.harness.dataset import Dataset, run_solver
from wsee_unfold.models.fum import FumModel, fum_infer, fum_train_incremental
from wsee_unfold.models.masum import masum_infer, masum_train
from wsee_unfold.models.training import TrainingOptions
from wsee_unfold.netmodel.channels import generate_channel_batch, stack_gains
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.netmodel.metrics import wsee
from wsee_unfold.solvers.options import SolverAlgorithm, SolverOptions

BENCH_HEADER = ("scheme", "p_max_dbw", "wsee_bits_per_joule", "wall_time_s", "accuracy_pct")
TRACE_HEADER = ("iteration", "algorithm", "wsee_bits_per_joule")
TIMING_THREADS = 1


class Scheme(str, Enum):
    ALGORITHM1 = "fp"
    ALGORITHM2 = "cf"
    FUM = "fum"
    MASUM = "masum"

    @property
    def is_solver(self) -> bool:
        return self in (Scheme.ALGORITHM1, Scheme.ALGORITHM2)


class BenchOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    pmax_dbw_start: float = Field(default=-30.0, description="First P_max of the sweep (dBW)")
    pmax_dbw_stop: float = Field(default=0.0, description="Last P_max of the sweep (dBW)")
    pmax_dbw_step: float = Field(default=3.0, gt=0, description="Sweep spacing (dB)")
    eval_samples: int = Field(default=50, ge=1, description="Channels in the fixed evaluation set")
    timing_instances: int = Field(default=20, ge=1, description="Instances used for inference timing")
    timing_reps: int = Field(default=5, ge=1, description="Timed repetitions per instance")
    layer_grid: List[int] = Field(default=[3, 5, 7], description="Layer counts of the depth ablation")
    attention_grid: List[int] = Field(default=[0, 1, 2, 3], description="Attention-block counts of the attention ablation")
    shift_path_loss: float = Field(default=0.5, description="Path-loss exponent offset of the off-training set")
    shift_fading: float = Field(default=1.5, gt=0, description="Fading-variance factor of the off-training set")

    def pmax_range(self) -> List[float]:
        count = int(np.floor((self.pmax_dbw_stop - self.pmax_dbw_start) / self.pmax_dbw_step + 1e-9)) + 1
        return [self.pmax_dbw_start + i * self.pmax_dbw_step for i in range(max(count, 0))]


@dataclass(frozen=True)
class BenchRow:
    scheme: str
    p_max_dbw: float
    wsee_bits_per_joule: float
    wall_time_s: float
    accuracy_pct: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BenchResult:
    rows: List[BenchRow] = field(default_factory=list)

    def schemes(self) -> List[str]:
        return list(dict.fromkeys(r.scheme for r in self.rows))

    def curve(self, scheme: str) -> List[Tuple[float, float]]:
        return [(r.p_max_dbw, r.wsee_bits_per_joule) for r in self.rows if r.scheme == scheme]

    def is_complete(self) -> bool:
        points = {(r.scheme, r.p_max_dbw) for r in self.rows}
        grid = {r.p_max_dbw for r in self.rows}
        return len(points) == len(self.rows) == len(self.schemes()) * len(grid)


@dataclass(frozen=True)
class TimingStats:
    samples: List[float]

    @property
    def median(self) -> float:
        return float(np.median(self.samples))

    @property
    def p95(self) -> float:
        return float(np.percentile(self.samples, 95))


@dataclass(frozen=True)
class AblationRow:
    setting: int
    accuracy_pct: float
    inference_ms: float


def ensure_trained(model) -> None:
    if model is None:
        raise InvalidInputError("a trained model is required for this scheme")
    if not model.trained:
        raise ModelNotTrainedError(f"{type(model).__name__} has not been trained")


def model_for(scheme: Scheme, models: Mapping[str, object]):
    model = models.get(scheme.value) if models else None
    ensure_trained(model)
    return model


def with_config(model, cfg: NetworkConfig):
    """The same learned parameters evaluated under another scenario of equal shape."""
    if (model.cfg.num_bs, model.cfg.users_per_bs) != cfg.shape:
        raise InvalidInputError(f"model was trained for {model.cfg.shape}, scenario is {cfg.shape}")
    return replace(model, cfg=cfg)


def allocate(
    scheme: Scheme,
    gains: np.ndarray,
    cfg: NetworkConfig,
    models: Optional[Mapping[str, object]] = None,
    solver: Optional[SolverOptions] = None,
) -> Tuple[np.ndarray, float]:
    """
    Allocations for a ``(B, M, K, M)`` batch and the mean per-instance wall time.
    """
    scheme = Scheme(scheme)
    if scheme.is_solver:
        start = time.perf_counter()
        rho = np.stack([run_solver(g, cfg, SolverAlgorithm(scheme.value), solver).rho_final.rho for g in gains])
        return rho, (time.perf_counter() - start) / len(gains)
    model = with_config(model_for(scheme, models), cfg)
    infer = fum_infer if scheme == Scheme.FUM else masum_infer
    allocation, per_instance = infer(model, gains)
    return allocation.rho, per_instance


def bench_pmax_sweep(
    cfg: NetworkConfig,
    schemes: Sequence[Scheme],
    pmax_range_dbw: Sequence[float],
    models: Optional[Mapping[str, object]] = None,
    n_eval: int = 50,
    seed: int = 0,
    solver: Optional[SolverOptions] = None,
    logger: Optional[lg.Logger] = None,
    show_progress: bool = False,
) -> BenchResult:
    """
    Mean wsee of every scheme at every P_max on one fixed channel set.
    Accuracy is measured against Algorithm 1 on the same channels.

    Raises:
        ModelNotTrainedError: a model scheme was requested with an untrained model.
    """
    log = (logger or lg.logger).bind(component="bench")
    schemes = [Scheme(s) for s in schemes]
    for scheme in schemes:
        if not scheme.is_solver:
            model_for(scheme, models)
    gains = stack_gains(generate_channel_batch(cfg, n_eval, seed))
    result = BenchResult()
    for p_dbw in tqdm(list(pmax_range_dbw), desc="P_max sweep", unit="point", disable=not show_progress):
        cfg_p = cfg.with_p_max_dbw(p_dbw)
        outcomes = {s: allocate(s, gains, cfg_p, models, solver) for s in schemes}
        if Scheme.ALGORITHM1 not in outcomes:
            reference_rho, _ = allocate(Scheme.ALGORITHM1, gains, cfg_p, solver=solver)
        else:
            reference_rho = outcomes[Scheme.ALGORITHM1][0]
        reference = np.asarray(wsee(gains, reference_rho, cfg_p))
        for scheme, (rho, seconds) in outcomes.items():
            achieved = np.asarray(wsee(gains, rho, cfg_p))
            row = BenchRow(
                scheme=scheme.value,
                p_max_dbw=float(p_dbw),
                wsee_bits_per_joule=float(achieved.mean()),
                wall_time_s=float(seconds),
                accuracy_pct=float(100.0 * np.mean(achieved / reference)),
            )
            result.rows.append(row)
            log.debug(f"{row.scheme} @ {row.p_max_dbw:+.1f} dBW: {row.wsee_bits_per_joule:.4e} bit/J")
    return result


def shifted_config(cfg: NetworkConfig, path_loss_delta: float = 0.5, fading_scale: float = 1.5) -> NetworkConfig:
    return cfg.model_copy(
        update={
            "path_loss_exponent": cfg.path_loss_exponent + path_loss_delta,
            "fading_variance": cfg.fading_variance * fading_scale,
        }
    )


def eval_off_training(
    models: Mapping[str, object],
    cfg_shifted: NetworkConfig,
    n_eval: int = 50,
    seed: int = 0,
    solver: Optional[SolverOptions] = None,
    logger: Optional[lg.Logger] = None,
) -> Dict[str, float]:
    """Achieved-WSEE ratio of every trained model vs Algorithm 1 on channels drawn from ``cfg_shifted``."""
    log = (logger or lg.logger).bind(component="bench")
    gains = stack_gains(generate_channel_batch(cfg_shifted, n_eval, seed))
    reference_rho, _ = allocate(Scheme.ALGORITHM1, gains, cfg_shifted, solver=solver)
    reference = np.asarray(wsee(gains, reference_rho, cfg_shifted))
    ratios = {}
    for name in models:
        rho, _ = allocate(Scheme(name), gains, cfg_shifted, models)
        ratios[name] = float(np.mean(np.asarray(wsee(gains, rho, cfg_shifted)) / reference))
        log.info(f"Off-training ratio of {name}: {ratios[name]:.4f}")
    return ratios


def measure_inference(
    scheme: Scheme,
    instances: np.ndarray,
    reps: int,
    cfg: NetworkConfig,
    models: Optional[Mapping[str, object]] = None,
    solver: Optional[SolverOptions] = None,
) -> TimingStats:
    """
    Warm per-call wall times over ``reps`` passes through ``instances``.
    Solver calls run to convergence; model calls are one forward pass. BLAS
    and OpenMP pools are limited to one thread while timing.
    """
    if reps < 1:
        raise InvalidInputError("reps must be at least 1")
    scheme = Scheme(scheme)
    instances = np.asarray(instances, dtype=float)
    if instances.ndim == 3:
        instances = instances[None]
    call: Callable[[np.ndarray], object]
    if scheme.is_solver:
        call = lambda g: run_solver(g, cfg, SolverAlgorithm(scheme.value), solver)  # noqa: E731
    else:
        model = with_config(model_for(scheme, models), cfg)
        infer = fum_infer if scheme == Scheme.FUM else masum_infer
        call = lambda g: infer(model, g)  # noqa: E731
    samples = []
    with threadpool_limits(limits=TIMING_THREADS):
        call(instances[0])
        for _ in range(reps):
            for g in instances:
                start = time.perf_counter()
                call(g)
                samples.append(time.perf_counter() - start)
    return TimingStats(samples)


def _held_out(dataset: Dataset):
    for name in ("test", "validation", "train"):
        data = dataset.training_data(name)
        if len(data):
            return data
    raise InvalidInputError("dataset is empty")


def _score(model, dataset: Dataset, reps: int, instances: int) -> Tuple[float, float]:
    data = _held_out(dataset)
    ratio = float(np.mean(np.asarray(wsee(data.gains, model.predict(data.gains), model.cfg)) / data.target_wsee))
    scheme = Scheme.FUM if isinstance(model, FumModel) else Scheme.MASUM
    timing = measure_inference(scheme, data.gains[:instances], reps, model.cfg, {scheme.value: model})
    return 100.0 * ratio, 1e3 * timing.median


def ablation_layers(
    cfg: NetworkConfig,
    dataset: Dataset,
    grid: Sequence[int] = (3, 5, 7),
    kind: Scheme = Scheme.FUM,
    training: Optional[TrainingOptions] = None,
    bench: Optional[BenchOptions] = None,
    logger: Optional[lg.Logger] = None,
) -> List[AblationRow]:
    """Accuracy and median inference time against the number of layers (FUM) or stages (MASUM)."""
    bench = bench or BenchOptions()
    rows = []
    for depth in grid:
        if Scheme(kind) == Scheme.FUM:
            opts = training or TrainingOptions(optimizer="gd", learning_rate=1e-2)
            model = fum_train_incremental(dataset, cfg, depth, opts.epochs_per_round, opts.learning_rate,
                                          opts.batch_size, opts, logger=logger).model
        else:
            positions = tuple(range(max(0, depth - 2), depth))
            model = masum_train(dataset, cfg, depth, positions, options=training, logger=logger).model
        accuracy, ms = _score(model, dataset, bench.timing_reps, bench.timing_instances)
        rows.append(AblationRow(depth, accuracy, ms))
    return rows


def ablation_attention(
    cfg: NetworkConfig,
    dataset: Dataset,
    grid: Sequence[int] = (0, 1, 2, 3),
    num_stages: int = 5,
    training: Optional[TrainingOptions] = None,
    bench: Optional[BenchOptions] = None,
    logger: Optional[lg.Logger] = None,
) -> List[AblationRow]:
    """MASUM accuracy and median inference time against the number of attention blocks (placed in the last stages)."""
    bench = bench or BenchOptions()
    rows = []
    for count in grid:
        if count > num_stages:
            raise InvalidInputError(f"{count} attention blocks do not fit in {num_stages} stages")
        positions = tuple(range(num_stages - count, num_stages))
        model = masum_train(dataset, cfg, num_stages, positions, options=training, logger=logger).model
        accuracy, ms = _score(model, dataset, bench.timing_reps, bench.timing_instances)
        rows.append(AblationRow(count, accuracy, ms))
    return rows


def convergence_traces(
    gains: np.ndarray,
    cfg: NetworkConfig,
    solver: Optional[SolverOptions] = None,
) -> List[Tuple[int, str, float]]:
    """``(iteration, algorithm, wsee)`` rows for both solvers run on one instance."""
    rows = []
    for algorithm in (SolverAlgorithm.NUMERICAL, SolverAlgorithm.CLOSED_FORM):
        report = run_solver(gains, cfg, algorithm, solver)
        rows.extend((i, algorithm.value, float(v)) for i, v in enumerate(report.objective_trace, start=1))
    return rows
