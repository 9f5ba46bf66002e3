"""
Service layer for CLI operations.

This module contains the orchestration behind every CLI command, separated
from the command interface to improve testability.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from rich.console import Console
from rich.table import Table

from wsee_unfold.cli.constants import ERROR_MESSAGES, ERROR_SUGGESTIONS, SUCCESS_MESSAGES
from wsee_unfold.cli.utils import (
    CLIError,
    print_success,
    print_warning,
    require_input_file,
    resolve_output_path,
)
from wsee_unfold.harness import bench
from wsee_unfold.harness.dataset import Dataset, gen_dataset, run_solver
from wsee_unfold.models.fum import FumModel, fum_train_incremental
from wsee_unfold.models.masum import MasumModel, masum_train
from wsee_unfold.models.training import TrainingResult
from wsee_unfold.netmodel.channels import generate_channels
from wsee_unfold.persistence.storage import ArtifactStorage
from wsee_unfold.settings import WseeUnfoldSettings
from wsee_unfold.solvers.options import SolverAlgorithm
from wsee_unfold.solvers.report import SolverReport
from wsee_unfold.utils.logging_setup import configure_logger

AnyModel = Union[FumModel, MasumModel]
ABLATION_HEADER = ("ablation", "setting", "accuracy_pct", "inference_ms")
TRAINING_LOG_HEADER = ("round", "epoch", "loss", "wsee_ratio")


class CLIService:
    """Service class for CLI operations."""

    def __init__(self, settings: WseeUnfoldSettings, console: Optional[Console] = None):
        self.settings = settings
        settings.ensure_artifact_dirs()
        self.logger = configure_logger(settings.log_verbose_level, settings.logs_dir)
        self.console = console or Console()
        self._storage: Optional[ArtifactStorage] = None

    @property
    def storage(self) -> ArtifactStorage:
        """Lazy-loaded artifact storage instance."""
        if self._storage is None:
            self._storage = ArtifactStorage(self.logger)
        return self._storage

    def _output(self, output_path: Optional[Path], base_dir: Path, stem: str, extension: str) -> Path:
        return resolve_output_path(output_path, base_dir, f"{stem}_{self.settings.timestamp}", extension, self.logger)

    def initialize_config(self, output_path: Optional[Path] = None) -> Path:
        """
        Write the default configuration file.

        Raises:
            CLIError: If config cannot be created
        """
        default_name = Path(self.settings.DEFAULT_CONFIG_FILENAME)
        output_path = resolve_output_path(
            output_path, Path.cwd(), default_name.stem, default_name.suffix, self.logger
        )
        try:
            self.settings.write_default_config(output_path)
        except OSError as e:
            raise CLIError(f"Failed to create configuration file: {e}", ERROR_SUGGESTIONS['permission_fix'], 2)
        print_success(
            SUCCESS_MESSAGES['config_created'].format(path=output_path),
            {"Size": f"{output_path.stat().st_size} bytes"},
        )
        return output_path

    def generate_dataset(self, n_samples: Optional[int] = None, output_path: Optional[Path] = None) -> Path:
        options = self.settings.dataset
        n_samples = n_samples or options.n_samples
        dataset = gen_dataset(
            self.settings.network,
            n_samples,
            options.solver,
            self.settings.seed,
            options=options,
            solver_options=self.settings.solver,
            workers=self.settings.workers,
            logger=self.logger,
            show_progress=self.settings.log_verbose_level >= 1,
        )
        path = self._output(output_path, self.settings.datasets_dir, "dataset", "jsonl")
        self.storage.save_dataset(dataset, path)
        print_success(
            SUCCESS_MESSAGES['dataset_saved'].format(count=len(dataset), path=path),
            {split: len(idx) for split, idx in dataset.splits.items()} | {"Regenerated": dataset.regenerated},
        )
        return path

    def solve(self, algorithm: str, output_path: Optional[Path] = None, timing: bool = False) -> SolverReport:
        cfg = self.settings.network
        channel = generate_channels(cfg, seed=self.settings.seed)
        report = run_solver(channel.gains, cfg, SolverAlgorithm(algorithm), self.settings.solver)
        path = self._output(output_path, self.settings.reports_dir, f"solve_{algorithm}", "json")
        self.storage.save_report(report, path, include_timing=timing)

        table = Table(title=f"Algorithm {'1' if algorithm == 'fp' else '2'} on seed {self.settings.seed}")
        table.add_column("Iterations", justify="center", style="cyan")
        table.add_column("Converged", justify="center", style="yellow")
        table.add_column("Final WSEE (bit/J)", justify="right", style="green")
        table.add_row(str(report.iterations), str(report.converged), f"{report.final_wsee:.6e}")
        self.console.print(table)
        if report.degraded:
            print_warning("The numerical rho-step reported degraded progress.")
        print_success(SUCCESS_MESSAGES['report_saved'].format(path=path))
        return report

    def load_dataset(self, dataset_path: Path) -> Dataset:
        require_input_file(dataset_path, "dataset")
        return self.storage.load_dataset(dataset_path)

    def load_models(self, model_paths: Sequence[Path]) -> Dict[str, AnyModel]:
        models: Dict[str, AnyModel] = {}
        for path in model_paths:
            require_input_file(path, "model file")
            model = self.storage.load_model(path)
            if (model.cfg.num_bs, model.cfg.users_per_bs) != self.settings.network.shape:
                raise CLIError(ERROR_MESSAGES['shape_mismatch'].format(
                    model_shape=(model.cfg.num_bs, model.cfg.users_per_bs), cfg_shape=self.settings.network.shape))
            models["fum" if isinstance(model, FumModel) else "masum"] = model
        return models

    def train(
        self,
        kind: str,
        dataset_path: Path,
        output_path: Optional[Path] = None,
        layers: Optional[int] = None,
    ) -> Path:
        dataset = self.load_dataset(dataset_path)
        cfg = dataset.cfg
        training = self.settings.training
        if kind == "fum":
            depth = layers or 5
            result: TrainingResult = fum_train_incremental(
                dataset, cfg, depth, training.epochs_per_round, training.learning_rate,
                training.batch_size, training, self.settings.solver, logger=self.logger,
                show_progress=self.settings.log_verbose_level >= 1,
            )
        else:
            depth = layers or 5
            positions = tuple(p for p in (depth - 2, depth - 1) if p >= 0)
            result = masum_train(
                dataset, cfg, depth, positions, options=training, logger=self.logger,
                show_progress=self.settings.log_verbose_level >= 1,
            )

        path = self._output(output_path, self.settings.models_dir, kind, "json")
        self.storage.save_model(result.model, path)
        log_path = path.with_name(f"{path.stem}_training_log.csv")
        self.storage.write_csv(log_path, TRAINING_LOG_HEADER, (row.to_dict() for row in result.log))
        if result.rejected_gradients or result.skipped_batches:
            print_warning(
                f"{result.rejected_gradients} NaN gradient(s) rejected, {result.skipped_batches} batch(es) skipped"
            )
        print_success(
            SUCCESS_MESSAGES['model_saved'].format(kind=kind.upper(), path=path),
            {"Layers": depth, "Final WSEE ratio": f"{result.final_ratio:.4f}", "Training log": log_path},
        )
        return path

    def evaluate(self, model_paths: Sequence[Path], output_path: Optional[Path] = None) -> Dict[str, Dict[str, float]]:
        models = self.load_models(model_paths)
        cfg = self.settings.network
        options = self.settings.bench
        in_dist = bench.eval_off_training(models, cfg, options.eval_samples, self.settings.seed,
                                          self.settings.solver, self.logger)
        shifted = bench.shifted_config(cfg, options.shift_path_loss, options.shift_fading)
        off = bench.eval_off_training(models, shifted, options.eval_samples, self.settings.seed,
                                      self.settings.solver, self.logger)
        results = {"in_distribution": in_dist, "off_training": off}

        table = Table(title="Achieved-WSEE ratio vs Algorithm 1", show_lines=True)
        table.add_column("Model", style="cyan")
        table.add_column("In-distribution (%)", justify="right", style="green")
        table.add_column("Off-training (%)", justify="right", style="yellow")
        for name in models:
            table.add_row(name.upper(), f"{100 * in_dist[name]:.2f}", f"{100 * off[name]:.2f}")
        self.console.print(table)

        path = self._output(output_path, self.settings.reports_dir, "eval", "json")
        self.storage.save_json(results, path)
        print_success(SUCCESS_MESSAGES['table_saved'].format(path=path))
        return results

    def bench(
        self,
        model_paths: Sequence[Path] = (),
        schemes: Optional[Sequence[str]] = None,
        output_path: Optional[Path] = None,
    ) -> Path:
        models = self.load_models(model_paths)
        schemes = list(schemes) if schemes else ["fp", "cf"] + list(models)
        options = self.settings.bench
        result = bench.bench_pmax_sweep(
            self.settings.network, schemes, options.pmax_range(), models, options.eval_samples,
            self.settings.seed, self.settings.solver, self.logger,
            show_progress=self.settings.log_verbose_level >= 1,
        )
        path = self._output(output_path, self.settings.reports_dir, "bench", "csv")
        self.storage.write_csv(path, bench.BENCH_HEADER, (row.to_dict() for row in result.rows))

        table = Table(title="Mean WSEE (bit/J) per P_max")
        table.add_column("P_max (dBW)", justify="right", style="cyan")
        for scheme in result.schemes():
            table.add_column(scheme.upper(), justify="right", style="green")
        for p_dbw in dict.fromkeys(r.p_max_dbw for r in result.rows):
            values = {r.scheme: r.wsee_bits_per_joule for r in result.rows if r.p_max_dbw == p_dbw}
            table.add_row(f"{p_dbw:+.1f}", *(f"{values[s]:.4e}" for s in result.schemes()))
        self.console.print(table)
        print_success(SUCCESS_MESSAGES['table_saved'].format(path=path))
        return path

    def ablate(self, which: str, dataset_path: Path, kind: str = "fum", output_path: Optional[Path] = None) -> Path:
        dataset = self.load_dataset(dataset_path)
        options = self.settings.bench
        if which == "layers":
            rows = bench.ablation_layers(dataset.cfg, dataset, options.layer_grid, bench.Scheme(kind),
                                         self.settings.training, options, self.logger)
        else:
            rows = bench.ablation_attention(dataset.cfg, dataset, options.attention_grid,
                                            training=self.settings.training, bench=options, logger=self.logger)
        path = self._output(output_path, self.settings.reports_dir, f"ablation_{which}", "csv")
        records: List[dict] = [
            {"ablation": which, "setting": r.setting, "accuracy_pct": r.accuracy_pct, "inference_ms": r.inference_ms}
            for r in rows
        ]
        self.storage.write_csv(path, ABLATION_HEADER, records)

        table = Table(title=f"Ablation over {which}", show_lines=True)
        table.add_column("Setting", justify="center", style="cyan")
        table.add_column("Accuracy (%)", justify="right", style="green")
        table.add_column("Inference (ms)", justify="right", style="yellow")
        for r in rows:
            table.add_row(str(r.setting), f"{r.accuracy_pct:.2f}", f"{r.inference_ms:.4f}")
        self.console.print(table)
        print_success(SUCCESS_MESSAGES['table_saved'].format(path=path))
        return path

    def trace(self, output_path: Optional[Path] = None) -> Path:
        cfg = self.settings.network
        channel = generate_channels(cfg, seed=self.settings.seed)
        rows = bench.convergence_traces(channel.gains, cfg, self.settings.solver)
        path = self._output(output_path, self.settings.reports_dir, "trace", "csv")
        self.storage.write_csv(
            path, bench.TRACE_HEADER,
            ({"iteration": i, "algorithm": a, "wsee_bits_per_joule": v} for i, a, v in rows),
        )
        print_success(SUCCESS_MESSAGES['table_saved'].format(path=path), {"Rows": len(rows)})
        return path
