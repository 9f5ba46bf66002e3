"""
Pydantic-based configuration for wsee-unfold.

One settings object carries the scenario, solver, training, dataset and
benchmark parameters plus artifact paths and logging. It can be loaded from a
JSON file (the documented run-config format) or a sectioned TOML file.
"""
from __future__ import annotations

import json
import os
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, ClassVar, Dict, Optional, Union

import tomlkit
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, computed_field, field_validator

from wsee_unfold.core.exceptions import InvalidInputError
from wsee_unfold.harness.bench import BenchOptions
from wsee_unfold.harness.dataset import DatasetOptions, default_workers
from wsee_unfold.models.training import TrainingOptions
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.solvers.options import SolverOptions

NESTED_SECTIONS = ("network", "solver", "training", "dataset", "bench")
FLAT_SECTIONS = ("paths", "logging", "run")


class LogLevel(int, Enum):
    """Console verbosity; QUIET drops the console sink, file logs are always written."""
    QUIET = -1
    WARNING = 0
    INFO = 1
    DEBUG = 2
    TRACE = 3


class WseeUnfoldSettings(BaseModel):
    """
    Settings for wsee-unfold.

    Settings are loaded with the following precedence (highest to lowest):
    1. CLI arguments
    2. Configuration file (JSON or TOML)
    3. Environment variables (``UNFOLD_EE_THREADS``)
    4. Default values
    """
    DEFAULT_CONFIG_FILENAME: ClassVar[str] = "wsee_unfold_config.toml"

    output_base_dir: Path = Field(
        default=Path("generated") / "artifacts",
        description="Base directory for all generated artifacts",
    )
    log_verbose_level: LogLevel = Field(
        default=LogLevel.INFO,
        description="Verbosity level for console logging (-1=quiet, 0=WARNING, 1=INFO, 2=DEBUG, 3=TRACE)",
    )
    workers: int = Field(
        default_factory=default_workers,
        ge=1,
        description="Worker threads for dataset labelling (UNFOLD_EE_THREADS, else min(4, cpu count))",
    )
    seed: int = Field(default=0, ge=0, description="Root seed for channel draws, restarts and shuffling")

    network: NetworkConfig = Field(default_factory=NetworkConfig, description="Scenario parameters")
    solver: SolverOptions = Field(default_factory=SolverOptions, description="Algorithm 1/2 options")
    training: TrainingOptions = Field(default_factory=TrainingOptions, description="Incremental training options")
    dataset: DatasetOptions = Field(default_factory=DatasetOptions, description="Dataset generation options")
    bench: BenchOptions = Field(default_factory=BenchOptions, description="Experiment options")

    timestamp: str = Field(
        default_factory=lambda: datetime.now().strftime("%Y%m%d_%H%M%S"),
        description="Timestamp for unique filenames",
    )

    model_config = {
        "validate_default": True,
    }

    @field_validator("output_base_dir", mode="before")
    @classmethod
    def expand_path(cls, v: Optional[Union[str, Path]]):
        """Expand and resolve paths."""
        if v is None:
            return v
        return Path(os.path.expandvars(str(Path(v).expanduser()))).resolve()

    @computed_field
    @property
    def logs_dir(self) -> Path:
        return self.output_base_dir / "logs" / "wsee_unfold"

    @computed_field
    @property
    def datasets_dir(self) -> Path:
        return self.output_base_dir / "datasets"

    @computed_field
    @property
    def models_dir(self) -> Path:
        return self.output_base_dir / "models"

    @computed_field
    @property
    def reports_dir(self) -> Path:
        return self.output_base_dir / "reports"

    def ensure_artifact_dirs(self) -> None:
        """Creates the artifact directories if they don't already exist."""
        for dir_path in (self.logs_dir, self.datasets_dir, self.models_dir, self.reports_dir):
            try:
                dir_path.mkdir(parents=True, exist_ok=True)
                logger.trace(f"Directory created: {dir_path}")
            except OSError as e:
                logger.error(f"Error creating directory {dir_path}: {e}")

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> "WseeUnfoldSettings":
        """
        Build settings from a sectioned mapping. ``paths``, ``logging`` and
        ``run`` are flattened into top-level fields; the other sections map
        to the nested option models. Top-level keys are accepted as is.
        """
        flat: Dict[str, Any] = {}
        for key, value in data.items():
            if key in FLAT_SECTIONS and isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        flat = {k: v for k, v in flat.items() if v is not None and v != "None"}
        return cls(**flat)

    @classmethod
    def from_file(cls, config_path: Union[str, Path]) -> "WseeUnfoldSettings":
        """
        Create settings from a ``.json`` or ``.toml`` config file.

        Raises:
            InvalidInputError: the file is missing, unparsable or fails validation.
        """
        config_path = Path(config_path)
        if not config_path.exists():
            raise InvalidInputError(f"Configuration file not found: {config_path}")
        text = config_path.read_text()
        try:
            if config_path.suffix.lower() == ".json":
                data = json.loads(text)
            else:
                data = tomlkit.loads(text).unwrap()
        except Exception as e:
            raise InvalidInputError(f"Error parsing configuration {config_path}: {e}") from e
        if not isinstance(data, dict):
            raise InvalidInputError(f"Configuration {config_path} must hold a mapping at the top level")
        try:
            return cls.from_mapping(data)
        except ValidationError as e:
            raise InvalidInputError(f"Invalid configuration in {config_path}: {e}") from e

    def to_sections(self) -> Dict[str, Dict[str, Any]]:
        return {
            "paths": {"output_base_dir": str(self.output_base_dir)},
            "logging": {"log_verbose_level": int(self.log_verbose_level)},
            "run": {"workers": self.workers, "seed": self.seed},
            **{name: getattr(self, name).model_dump(mode="json") for name in NESTED_SECTIONS},
        }

    def write_default_config(self, path: Optional[Path] = None) -> Path:
        """
        Write this configuration to ``path`` (TOML, or JSON for a ``.json`` suffix).

        Raises:
            OSError: If the file cannot be written
        """
        path = Path(path) if path is not None else Path.cwd() / self.DEFAULT_CONFIG_FILENAME
        sections = self.to_sections()
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            if path.suffix.lower() == ".json":
                path.write_text(json.dumps(sections, indent=2) + "\n")
            else:
                with open(path, "w") as f:
                    tomlkit.dump(sections, f)
            return path
        except Exception as e:
            raise OSError(f"Failed to write config file to {path}: {e}")
