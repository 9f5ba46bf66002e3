from __future__ import annotations

import json
import sys
from pathlib import Path

import loguru
import numpy as np
import pytest

from wsee_unfold.models.training import TrainingData
from wsee_unfold.netmodel.channels import generate_channel_batch, generate_channels, stack_gains
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.netmodel.metrics import wsee
from wsee_unfold.solvers.fp_closedform import solve_algorithm2


@pytest.fixture(scope="session")
def wu_test_logger() -> loguru.Logger:
    """A logger instance for wsee_unfold tests."""
    logger = loguru.logger
    logger.remove()
    logger.add(
        sys.stderr,
        level="DEBUG",
        colorize=True,
        format="<green>{time:HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | WU_TESTS | <cyan>{name}:{function}:{line}</cyan> - <level>{message}</level>"
    )
    return logger


@pytest.fixture
def caplog(caplog: pytest.LogCaptureFixture):
    logger = loguru.logger
    handler_id = logger.add(
        caplog.handler,
        format="{message}",
        level=0,
        filter=lambda record: record["level"].no >= caplog.handler.level,
        enqueue=False,  # Set to 'True' if your test is spawning child processes.
    )
    yield caplog
    logger.remove(handler_id)


@pytest.fixture
def small_cfg() -> NetworkConfig:
    return NetworkConfig(num_bs=2, users_per_bs=2, num_antennas=4)


@pytest.fixture
def single_link_cfg() -> NetworkConfig:
    return NetworkConfig(num_bs=1, users_per_bs=1, num_antennas=2)


@pytest.fixture
def small_channel(small_cfg):
    return generate_channels(small_cfg, seed=3)


def label_with_cf(cfg: NetworkConfig, count: int, seed: int = 11) -> TrainingData:
    channels = generate_channel_batch(cfg, count, seed)
    gains = stack_gains(channels)
    rho = np.stack([solve_algorithm2(g, cfg).rho_final.rho for g in gains])
    return TrainingData(gains=gains, target_rho=rho, target_wsee=np.asarray(wsee(gains, rho, cfg)))


@pytest.fixture
def labelled_data(small_cfg) -> TrainingData:
    return label_with_cf(small_cfg, 4)


@pytest.fixture
def cli_config(tmp_path) -> Path:
    """A small JSON run configuration writing artifacts under ``tmp_path``."""
    config = {
        "paths": {"output_base_dir": str(tmp_path / "artifacts")},
        "logging": {"log_verbose_level": 0},
        "run": {"workers": 1, "seed": 0},
        "network": {"num_bs": 2, "users_per_bs": 2, "num_antennas": 4},
        "dataset": {"n_samples": 4, "restarts": 1},
        "training": {"epochs_per_round": 1, "final_epochs": 1, "batch_size": 4},
        "bench": {
            "pmax_dbw_start": -10.0,
            "pmax_dbw_stop": -7.0,
            "eval_samples": 2,
            "timing_instances": 2,
            "timing_reps": 1,
            "layer_grid": [1, 2],
            "attention_grid": [0, 1],
        },
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config))
    return path
