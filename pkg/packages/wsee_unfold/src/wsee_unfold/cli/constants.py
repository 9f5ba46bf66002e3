"""
Constants for CLI commands.

This module contains all constant values used throughout the CLI to ensure
consistency and ease of maintenance.
"""
from __future__ import annotations

# Exit codes
EXIT_OK = 0
EXIT_INVALID_INPUT = 1
EXIT_RUNTIME_FAILURE = 2

# Error message templates
ERROR_MESSAGES = {
    'file_not_found': "File not found: {path}. Please check the path and try again.",
    'config_load_error': "Error loading configuration from {path}: {error}",
    'invalid_scheme': "Unsupported scheme '{scheme}'. Supported schemes: {supported}",
    'shape_mismatch': "Model was built for a {model_shape} network but the scenario is {cfg_shape}.",
    'permission_denied': "Permission denied accessing {path}. Check file permissions.",
}

# Success message templates
SUCCESS_MESSAGES = {
    'config_created': "Configuration file created at {path}",
    'dataset_saved': "Dataset with {count} samples saved to {path}",
    'report_saved': "Solver report saved to {path}",
    'model_saved': "Trained {kind} model saved to {path}",
    'table_saved': "Results written to {path}",
}

SUPPORTED_ALGORITHMS = ["fp", "cf"]
SUPPORTED_SCHEMES = ["fp", "cf", "fum", "masum"]
SUPPORTED_MODEL_KINDS = ["fum", "masum"]
SUPPORTED_ABLATIONS = ["layers", "attention"]


# Validation ranges
VERBOSE_LEVEL_RANGE = (-1, 3)

# Command descriptions
COMMAND_DESCRIPTIONS = {
    'init': "Initialize a configuration file with default settings",
    'gen-data': "Generate a labelled dataset of channel realizations",
    'solve': "Run Algorithm 1 or Algorithm 2 on one channel realization",
    'train': "Train a FUM or MASUM model on a dataset",
    'eval': "Evaluate trained models on in-distribution and off-training channels",
    'bench': "Sweep P_max and compare every scheme",
    'ablate': "Run the layer-count or attention-count ablation",
    'trace': "Record the convergence traces of both solvers on one instance",
}

# Parameter help text with examples
PARAMETER_HELP = {
    'config_file': "Path to configuration file (JSON or TOML). Example: ./run.json",
    'output_path': "Path where output will be saved",
    'verbose': "Logging level: -1=quiet, 0=WARNING, 1=INFO, 2=DEBUG, 3=TRACE",
    'seed': "Root seed; the same seed reproduces the same outputs",
    'algorithm': f"Solver. Options: {', '.join(SUPPORTED_ALGORITHMS)} (fp = Algorithm 1, cf = Algorithm 2)",
    'timing': "Record wall-clock time in the report (makes reports non-reproducible)",
    'dataset': "Path to a dataset file produced by gen-data. Example: ./datasets/train.jsonl",
    'model_kind': f"Model to train. Options: {', '.join(SUPPORTED_MODEL_KINDS)}",
    'model_paths': "Trained model files (repeatable). Example: --model fum.json --model masum.json",
    'schemes': f"Schemes to compare (repeatable). Options: {', '.join(SUPPORTED_SCHEMES)}",
    'samples': "Number of samples to generate",
    'layers': "Number of layers (FUM) or stages (MASUM)",
    'ablation': f"Which ablation to run. Options: {', '.join(SUPPORTED_ABLATIONS)}",
}

# Suggestions for common errors
ERROR_SUGGESTIONS = {
    'config_fix': "Check the configuration syntax, or run 'wsee-unfold init' to create a default file.",
    'permission_fix': "Try running with appropriate permissions or changing the output directory.",
    'train_first': "Train the model with 'wsee-unfold train' before evaluating it.",
    'gen_data_first': "Generate a dataset with 'wsee-unfold gen-data' first.",
}
