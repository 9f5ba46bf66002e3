"""
CLI commands for wsee-unfold.

Every command reads an optional JSON/TOML configuration, accepts ``--seed``
for determinism and writes JSON or CSV outputs. Exit codes: 0 success,
1 invalid input, 2 runtime failure.
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Annotated, List, Optional

from cyclopts import App, Parameter
from loguru import logger

from wsee_unfold.cli.constants import COMMAND_DESCRIPTIONS, ERROR_MESSAGES, PARAMETER_HELP, SUPPORTED_ABLATIONS, SUPPORTED_SCHEMES
from wsee_unfold.cli.parameters import (
    ConfigFileParam,
    ModelPathsParam,
    OutputPathParam,
    SeedParam,
    VerboseParam,
    algorithm_param,
    input_path_param,
    model_kind_param,
    schemes_param,
    validate_choice,
)
from wsee_unfold.cli.service import CLIService
from wsee_unfold.cli.utils import CLIError, as_cli_error, handle_cli_error, load_settings_with_overrides
from wsee_unfold.settings import WseeUnfoldSettings

app = App(
    help="⚡ WSEE power control: FP solvers, deep-unfolded models and experiments\n\n"
         "Examples:\n"
         "  wsee-unfold init -o run.json                          # Write a default config\n"
         "  wsee-unfold gen-data -c run.json --samples 200        # Label a dataset\n"
         "  wsee-unfold solve --algorithm cf -c run.json --seed 7 # Solve one instance\n"
         "  wsee-unfold train data.jsonl --kind fum -c run.json   # Train a FUM\n"
         "  wsee-unfold bench -m fum.json -c run.json             # P_max sweep"
)


def _service(config_file: Optional[Path], verbose: int, seed: Optional[int]) -> CLIService:
    settings = load_settings_with_overrides(config_file, log_verbose_level=verbose, seed=seed)
    return CLIService(settings)


def _run(context: str, action):
    try:
        return action()
    except CLIError as e:
        handle_cli_error(e, logger)
    except Exception as e:
        handle_cli_error(as_cli_error(e, context), logger)


@app.command(name="init", help=COMMAND_DESCRIPTIONS["init"])
def init(
    output_path: OutputPathParam = None,
    verbose: VerboseParam = 1,
):
    """Initialize configuration file with default settings (TOML, or JSON for a .json path)."""
    _run("Initialization failed",
         lambda: CLIService(WseeUnfoldSettings(log_verbose_level=verbose)).initialize_config(output_path))


@app.command(name="gen-data", help=COMMAND_DESCRIPTIONS["gen-data"])
def gen_data(
    config_file: ConfigFileParam = None,
    samples: Annotated[Optional[int], Parameter(name=["--samples", "-n"], help=PARAMETER_HELP['samples'])] = None,
    output_path: OutputPathParam = None,
    seed: SeedParam = None,
    verbose: VerboseParam = 1,
):
    """Generate a labelled dataset (JSON lines)."""
    def action():
        if samples is not None and samples < 1:
            raise CLIError("--samples must be at least 1")
        return _service(config_file, verbose, seed).generate_dataset(samples, output_path)
    _run("Dataset generation failed", action)


@app.command(name="solve", help=COMMAND_DESCRIPTIONS["solve"])
def solve(
    algorithm: Annotated[str, algorithm_param()] = "cf",
    config_file: ConfigFileParam = None,
    output_path: OutputPathParam = None,
    seed: SeedParam = None,
    timing: Annotated[bool, Parameter(help=PARAMETER_HELP['timing'])] = False,
    verbose: VerboseParam = 1,
):
    """Solve one channel realization (drawn from --seed) and write the solver report."""
    _run("Solve failed", lambda: _service(config_file, verbose, seed).solve(algorithm, output_path, timing))


@app.command(name="train", help=COMMAND_DESCRIPTIONS["train"])
def train(
    dataset: Annotated[Path, input_path_param(PARAMETER_HELP['dataset'])],
    kind: Annotated[str, model_kind_param()] = "fum",
    layers: Annotated[Optional[int], Parameter(name=["--layers", "-l"], help=PARAMETER_HELP['layers'])] = None,
    config_file: ConfigFileParam = None,
    output_path: OutputPathParam = None,
    seed: SeedParam = None,
    verbose: VerboseParam = 1,
):
    """Train a model layer by layer on the dataset's training split."""
    def action():
        if layers is not None and layers < 1:
            raise CLIError("--layers must be at least 1")
        return _service(config_file, verbose, seed).train(kind, dataset, output_path, layers)
    _run("Training failed", action)


@app.command(name="eval", help=COMMAND_DESCRIPTIONS["eval"])
def evaluate(
    models: ModelPathsParam = None,
    config_file: ConfigFileParam = None,
    output_path: OutputPathParam = None,
    seed: SeedParam = None,
    verbose: VerboseParam = 1,
):
    """Compare trained models against Algorithm 1 on in-distribution and shifted channels."""
    def action():
        if not models:
            raise CLIError("At least one --model is required")
        return _service(config_file, verbose, seed).evaluate(models, output_path)
    _run("Evaluation failed", action)


@app.command(name="bench", help=COMMAND_DESCRIPTIONS["bench"])
def bench(
    models: ModelPathsParam = None,
    scheme: Annotated[Optional[List[str]], schemes_param()] = None,
    config_file: ConfigFileParam = None,
    output_path: OutputPathParam = None,
    seed: SeedParam = None,
    verbose: VerboseParam = 1,
):
    """Sweep P_max and write `scheme,p_max_dbw,wsee_bits_per_joule,wall_time_s,accuracy_pct` rows."""
    def action():
        for s in scheme or []:
            if s not in SUPPORTED_SCHEMES:
                raise CLIError(ERROR_MESSAGES['invalid_scheme'].format(scheme=s, supported=', '.join(SUPPORTED_SCHEMES)))
        return _service(config_file, verbose, seed).bench(models or [], scheme, output_path)
    _run("Benchmark failed", action)


@app.command(name="ablate", help=COMMAND_DESCRIPTIONS["ablate"])
def ablate(
    which: Annotated[str, Parameter(help=PARAMETER_HELP['ablation'], validator=validate_choice(SUPPORTED_ABLATIONS))],
    dataset: Annotated[Path, input_path_param(PARAMETER_HELP['dataset'])],
    kind: Annotated[str, model_kind_param()] = "fum",
    config_file: ConfigFileParam = None,
    output_path: OutputPathParam = None,
    seed: SeedParam = None,
    verbose: VerboseParam = 1,
):
    """Train models over a layer-count or attention-count grid and tabulate accuracy and speed."""
    _run("Ablation failed", lambda: _service(config_file, verbose, seed).ablate(which, dataset, kind, output_path))


@app.command(name="trace", help=COMMAND_DESCRIPTIONS["trace"])
def trace(
    config_file: ConfigFileParam = None,
    output_path: OutputPathParam = None,
    seed: SeedParam = None,
    verbose: VerboseParam = 1,
):
    """Run both solvers on one instance and write `iteration,algorithm,wsee_bits_per_joule` rows."""
    _run("Trace failed", lambda: _service(config_file, verbose, seed).trace(output_path))


def main():
    """Main entry point for the CLI application."""
    try:
        app()
    except KeyboardInterrupt:
        print("\n❌ Operation cancelled by user")
        sys.exit(1)


if __name__ == "__main__":
    main()
