"""
Labelled dataset generation.

Each sample is one channel realization labelled with the best allocation
found by a solver over several restarts. Samples are independent and
seed-partitioned, so they are labelled in parallel and the result does not
depend on the worker count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import loguru as lg
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm.auto import tqdm

from wsee_unfold.core.exceptions import InvalidInputError
from wsee_unfold.models.training import TrainingData
from wsee_unfold.netmodel.allocation import PowerAllocation, random_feasible_allocation, uniform_allocation
from wsee_unfold.netmodel.channels import ChannelRealization, generate_channels, partition_seeds, stack_gains
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.netmodel.metrics import wsee
from wsee_unfold.solvers.fp_closedform import solve_algorithm2
from wsee_unfold.solvers.fp_numerical import solve_algorithm1
from wsee_unfold.solvers.options import SolverAlgorithm, SolverOptions
from wsee_unfold.solvers.report import SolverReport

SPLITS = ("train", "validation", "test")


class DatasetOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_samples: int = Field(default=2200, ge=1, description="Number of labelled realizations")
    solver: SolverAlgorithm = Field(default=SolverAlgorithm.CLOSED_FORM, description="Solver producing the labels")
    restarts: int = Field(default=3, ge=1, description="Solver runs per sample; the best is kept")
    train_share: float = Field(default=8000 / 22000, gt=0, le=1, description="Fraction of samples used for training")
    max_regenerations: int = Field(default=5, ge=0, description="Redraws allowed for a sample whose solve degraded")


def default_workers() -> int:
    """``UNFOLD_EE_THREADS`` if set, else ``min(4, cpu_count)``."""
    env = os.environ.get("UNFOLD_EE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInputError(f"UNFOLD_EE_THREADS must be an integer, got '{env}'")
    return min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class Sample:
    channel: ChannelRealization
    target_rho: PowerAllocation
    target_wsee: float
    solver: str
    regenerations: int = 0

    def to_row(self) -> dict:
        return {
            **self.channel.to_row(),
            "target_rho": self.target_rho.to_list(),
            "target_wsee": self.target_wsee,
            "solver": self.solver,
            "regenerations": self.regenerations,
        }

    @classmethod
    def from_row(cls, row: dict, config_ref: str = "") -> "Sample":
        return cls(
            channel=ChannelRealization.from_row(row, config_ref),
            target_rho=PowerAllocation(np.asarray(row["target_rho"], dtype=float)),
            target_wsee=float(row["target_wsee"]),
            solver=row["solver"],
            regenerations=int(row.get("regenerations", 0)),
        )


@dataclass
class Dataset:
    cfg: NetworkConfig
    samples: List[Sample]
    splits: Dict[str, List[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.splits:
            self.splits = {"train": list(range(len(self.samples))), "validation": [], "test": []}
        self.validate()

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def regenerated(self) -> int:
        return sum(s.regenerations for s in self.samples)

    def validate(self) -> None:
        """Check split coverage and that every stored target matches its recomputed wsee."""
        indices = sorted(i for name in SPLITS for i in self.splits.get(name, []))
        if indices != list(range(len(self.samples))):
            raise InvalidInputError("dataset splits must be disjoint and cover every sample")
        for i, sample in enumerate(self.samples):
            sample.channel.check_matches(self.cfg)
            recomputed = float(wsee(sample.channel.gains, sample.target_rho.rho, self.cfg))
            if not math.isclose(recomputed, sample.target_wsee, rel_tol=1e-9, abs_tol=1e-12):
                raise InvalidInputError(
                    f"sample {i}: stored target wsee {sample.target_wsee} differs from {recomputed}"
                )

    def split(self, name: str) -> List[Sample]:
        if name not in SPLITS:
            raise InvalidInputError(f"unknown split '{name}' (expected one of {SPLITS})")
        return [self.samples[i] for i in self.splits.get(name, [])]

    def gains(self, name: Optional[str] = None) -> np.ndarray:
        samples = self.samples if name is None else self.split(name)
        if not samples:
            return np.empty((0, self.cfg.num_bs, self.cfg.users_per_bs, self.cfg.num_bs))
        return stack_gains([s.channel for s in samples])

    def training_data(self, split: str) -> TrainingData:
        samples = self.split(split)
        if not samples:
            M, K = self.cfg.shape
            return TrainingData(np.empty((0, M, K, M)), np.empty((0, M, K)), np.empty(0))
        return TrainingData(
            gains=stack_gains([s.channel for s in samples]),
            target_rho=np.stack([s.target_rho.rho for s in samples]),
            target_wsee=np.array([s.target_wsee for s in samples]),
        )


def run_solver(
    gains: np.ndarray,
    cfg: NetworkConfig,
    algorithm: SolverAlgorithm,
    opts: Optional[SolverOptions] = None,
    rho_init: Optional[PowerAllocation] = None,
) -> SolverReport:
    solve = solve_algorithm1 if SolverAlgorithm(algorithm) == SolverAlgorithm.NUMERICAL else solve_algorithm2
    return solve(gains, cfg, opts, rho_init=rho_init)


def solve_with_restarts(
    channel: ChannelRealization,
    cfg: NetworkConfig,
    algorithm: SolverAlgorithm,
    restarts: int,
    seed: int,
    opts: Optional[SolverOptions] = None,
) -> List[SolverReport]:
    """One run from the uniform allocation, then ``restarts - 1`` from random feasible ones."""
    rng = np.random.default_rng(seed)
    inits = [uniform_allocation(cfg)] + [random_feasible_allocation(cfg, rng) for _ in range(restarts - 1)]
    return [run_solver(channel.gains, cfg, algorithm, opts, init) for init in inits]


def label_sample(
    cfg: NetworkConfig,
    seed: int,
    algorithm: SolverAlgorithm,
    restarts: int,
    opts: Optional[SolverOptions] = None,
    max_regenerations: int = 5,
    logger: Optional[lg.Logger] = None,
) -> Sample:
    """
    Draw a channel from ``seed`` and label it. If any restart reports
    degraded progress the channel is redrawn from a derived seed.
    """
    log = logger or lg.logger
    draw_seed, attempt = seed, 0
    while True:
        channel = generate_channels(cfg, seed=draw_seed)
        reports = solve_with_restarts(channel, cfg, algorithm, restarts, draw_seed, opts)
        degraded = any(r.degraded for r in reports)
        if not degraded or attempt >= max_regenerations:
            break
        attempt += 1
        log.warning(f"Sample seed {draw_seed}: degraded solve, regenerating")
        draw_seed = int(np.random.SeedSequence([seed, attempt]).generate_state(1, dtype=np.uint64)[0])
    if degraded:
        log.warning(f"Sample seed {seed}: keeping a degraded solve after {attempt} redraws")
    best = max(reports, key=lambda r: r.final_wsee)
    return Sample(
        channel=channel,
        target_rho=best.rho_final,
        target_wsee=float(wsee(channel.gains, best.rho_final.rho, cfg)),
        solver=SolverAlgorithm(algorithm).value,
        regenerations=attempt,
    )


def make_splits(n: int, train_share: float, seed: int) -> Dict[str, List[int]]:
    """Shuffled train share, remainder halved between validation and test."""
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(n, max(1, int(round(train_share * n))))
    n_val = (n - n_train) // 2
    return {
        "train": sorted(int(i) for i in order[:n_train]),
        "validation": sorted(int(i) for i in order[n_train : n_train + n_val]),
        "test": sorted(int(i) for i in order[n_train + n_val :]),
    }


def gen_dataset(
    cfg: NetworkConfig,
    n_samples: int,
    solver_choice: SolverAlgorithm = SolverAlgorithm.CLOSED_FORM,
    seed: int = 0,
    options: Optional[DatasetOptions] = None,
    solver_options: Optional[SolverOptions] = None,
    workers: Optional[int] = None,
    logger: Optional[lg.Logger] = None,
    show_progress: bool = False,
) -> Dataset:
    """
    Generate ``n_samples`` labelled realizations.

    Raises:
        InvalidInputError: ``n_samples < 1``.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be at least 1")
    options = options or DatasetOptions()
    log = (logger or lg.logger).bind(component="dataset")
    workers = workers or default_workers()
    seeds = partition_seeds(seed, n_samples)
    log.info(f"Labelling {n_samples} samples with solver '{SolverAlgorithm(solver_choice).value}' on {workers} worker(s)")

    def label(sample_seed: int) -> Sample:
        return label_sample(cfg, sample_seed, solver_choice, options.restarts, solver_options,
                            options.max_regenerations, log)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        samples = list(tqdm(pool.map(label, seeds), total=n_samples, desc="Labelling samples",
                            unit="sample", disable=not show_progress))

    dataset = Dataset(cfg=cfg, samples=samples, splits=make_splits(n_samples, options.train_share, seed))
    if dataset.regenerated:
        log.warning(f"{dataset.regenerated} sample(s) were regenerated after degraded solves")
    log.debug(f"Dataset splits: { {k: len(v) for k, v in dataset.splits.items()} }")
    return dataset
