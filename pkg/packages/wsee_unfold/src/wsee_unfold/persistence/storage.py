"""
Artifact storage.

Saves and loads trained models (JSON), labelled datasets (JSON lines: one
header line with the scenario and splits, then one line per sample), solver
reports (JSON) and result tables (CSV).
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Sequence, Union

import loguru as lg
import numpy as np
from pydantic import ValidationError

from wsee_unfold.core.exceptions import InvalidInputError
from wsee_unfold.harness.dataset import Dataset, Sample
from wsee_unfold.models.fum import LAYER_FIELDS, FumLayer, FumModel
from wsee_unfold.models.masum import MasumModel
from wsee_unfold.netmodel.allocation import PowerAllocation
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.solvers.options import SolverOptions
from wsee_unfold.solvers.report import SolverReport

PathLike = Union[str, Path]


def model_to_dict(model: Union[FumModel, MasumModel]) -> Dict[str, Any]:
    common = {
        "cfg": model.cfg.model_dump(mode="json"),
        "init_rho": model.init_rho.to_list(),
        "trained": model.trained,
    }
    if isinstance(model, FumModel):
        return {
            "type": "fum",
            "L": model.num_layers,
            "layers": [{name: getattr(layer, name).tolist() for name in LAYER_FIELDS} for layer in model.layers],
            "init_gamma": None if model.init_gamma is None else np.asarray(model.init_gamma).tolist(),
            "solver": model.solver.model_dump(mode="json"),
            **common,
        }
    return {
        "type": "masum",
        "num_stages": model.num_stages,
        "attention_positions": list(model.attention_positions),
        "channels": model.channels,
        "hidden": model.hidden,
        "params": {name: value.tolist() for name, value in model.params.items()},
        **common,
    }


def model_from_dict(data: Mapping[str, Any]) -> Union[FumModel, MasumModel]:
    """
    Raises:
        InvalidInputError: unknown model type, missing keys or invalid values.
    """
    try:
        cfg = NetworkConfig.model_validate(data["cfg"])
        init_rho = PowerAllocation(np.asarray(data["init_rho"], dtype=float))
        if data["type"] == "fum":
            layers = tuple(FumLayer(**{name: np.asarray(layer[name]) for name in LAYER_FIELDS}) for layer in data["layers"])
            if len(layers) != data["L"]:
                raise InvalidInputError(f"model declares L={data['L']} but stores {len(layers)} layers")
            gamma = data.get("init_gamma")
            return FumModel(
                layers=layers,
                cfg=cfg,
                init_rho=init_rho,
                init_gamma=None if gamma is None else np.asarray(gamma, dtype=float),
                solver=SolverOptions.model_validate(data.get("solver", {})),
                trained=bool(data.get("trained", False)),
            )
        if data["type"] == "masum":
            return MasumModel(
                cfg=cfg,
                num_stages=int(data["num_stages"]),
                attention_positions=tuple(data["attention_positions"]),
                params={name: np.asarray(value, dtype=float) for name, value in data["params"].items()},
                channels=int(data["channels"]),
                hidden=int(data["hidden"]),
                init_rho=init_rho,
                trained=bool(data.get("trained", False)),
            )
        raise InvalidInputError(f"unknown model type '{data['type']}'")
    except KeyError as e:
        raise InvalidInputError(f"model file is missing key {e}") from e
    except ValidationError as e:
        raise InvalidInputError(f"model file has an invalid section: {e}") from e


class ArtifactStorage:
    """Reads and writes every artifact the CLI produces."""

    def __init__(self, logger: lg.Logger):
        self.logger = logger.bind(component="ArtifactStorage")

    def _prepare(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _read_json(self, path: PathLike) -> Any:
        path = Path(path)
        if not path.exists():
            raise InvalidInputError(f"file not found: {path}")
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path} is not valid JSON: {e}") from e

    def save_model(self, model: Union[FumModel, MasumModel], path: PathLike) -> Path:
        path = self._prepare(path)
        path.write_text(json.dumps(model_to_dict(model), indent=2))
        self.logger.info(f"Saved {type(model).__name__} to '{path}'")
        return path

    def load_model(self, path: PathLike) -> Union[FumModel, MasumModel]:
        model = model_from_dict(self._read_json(path))
        self.logger.debug(f"Loaded {type(model).__name__} from '{path}'")
        return model

    def save_dataset(self, dataset: Dataset, path: PathLike) -> Path:
        path = self._prepare(path)
        header = {
            "kind": "header",
            "cfg": dataset.cfg.model_dump(mode="json"),
            "n_samples": len(dataset),
            "splits": dataset.splits,
        }
        with open(path, "w") as f:
            f.write(json.dumps(header) + "\n")
            for sample in dataset.samples:
                f.write(json.dumps(sample.to_row()) + "\n")
        self.logger.info(f"Saved dataset with {len(dataset)} samples to '{path}'")
        return path

    def load_dataset(self, path: PathLike) -> Dataset:
        path = Path(path)
        if not path.exists():
            raise InvalidInputError(f"dataset file not found: {path}")
        lines = [line for line in path.read_text().splitlines() if line.strip()]
        try:
            header = json.loads(lines[0]) if lines else {}
            if header.get("kind") != "header":
                raise InvalidInputError(f"{path} does not start with a dataset header")
            cfg = NetworkConfig.model_validate(header["cfg"])
            samples = [Sample.from_row(json.loads(line), cfg.identity()) for line in lines[1:]]
        except (json.JSONDecodeError, KeyError, ValidationError) as e:
            raise InvalidInputError(f"{path} is not a valid dataset: {e}") from e
        if len(samples) != header.get("n_samples", len(samples)):
            raise InvalidInputError(f"{path} declares {header['n_samples']} samples but holds {len(samples)}")
        self.logger.debug(f"Loaded dataset with {len(samples)} samples from '{path}'")
        return Dataset(cfg=cfg, samples=samples, splits={k: list(v) for k, v in header["splits"].items()})

    def save_report(self, report: SolverReport, path: PathLike, include_timing: bool = False) -> Path:
        path = self._prepare(path)
        path.write_text(report.to_json(include_timing) + "\n")
        self.logger.info(f"Saved {report.algorithm} report to '{path}'")
        return path

    def save_json(self, data: Any, path: PathLike) -> Path:
        path = self._prepare(path)
        path.write_text(json.dumps(data, indent=2) + "\n")
        return path

    def write_csv(self, path: PathLike, fieldnames: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
        path = self._prepare(path)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(fieldnames))
            writer.writeheader()
            count = 0
            for row in rows:
                writer.writerow({k: row[k] for k in fieldnames})
                count += 1
        self.logger.info(f"Wrote {count} row(s) to '{path}'")
        return path
