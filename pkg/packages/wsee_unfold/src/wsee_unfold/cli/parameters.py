"""
cyclopts parameter definitions shared by the wsee-unfold commands: paths,
verbosity, seeds and the algorithm/model/scheme choices.
"""
from __future__ import annotations

from pathlib import Path
from typing import Annotated, List, Optional, Sequence

import cyclopts
from cyclopts import Parameter, Token

from wsee_unfold.cli.constants import (
    PARAMETER_HELP,
    SUPPORTED_ALGORITHMS,
    SUPPORTED_MODEL_KINDS,
    VERBOSE_LEVEL_RANGE,
)


def convert_to_path(_, path_str: Sequence[Token]) -> Optional[Path]:
    """Turn the first token into a Path (None when the option is absent)."""
    return Path(path_str[0].value) if path_str else None


def validate_verbose_level(_, level: int) -> None:
    if not (VERBOSE_LEVEL_RANGE[0] <= level <= VERBOSE_LEVEL_RANGE[1]):
        raise cyclopts.ValidationError(
            f"--verbose takes {VERBOSE_LEVEL_RANGE[0]}..{VERBOSE_LEVEL_RANGE[1]} (got {level})"
        )


def validate_choice(choices: Sequence[str]):
    def validator(_, value: Optional[str]):
        if value is not None and value not in choices:
            raise cyclopts.ValidationError(f"Must be one of: {', '.join(choices)} (got '{value}')")
    return validator


def validate_non_negative(_, value: Optional[int]):
    if value is not None and value < 0:
        raise cyclopts.ValidationError(f"Must be non-negative (got {value})")


# Parameter factories
def config_file_param():
    """Create a config file parameter.

    Existence is checked by the service so a missing file maps to the
    invalid-input exit code.
    """
    return Parameter(
        name=["--config", "-c"],
        help=PARAMETER_HELP['config_file'],
        converter=convert_to_path,
    )


def output_path_param():
    """Create an output path parameter."""
    return Parameter(
        name=["--output-path", "-o"],
        help=PARAMETER_HELP['output_path'],
        converter=convert_to_path,
    )


def input_path_param(help_text: str):
    return Parameter(help=help_text, converter=convert_to_path)


def verbose_param():
    """Create a verbose level parameter."""
    return Parameter(
        name=["--verbose", "-v"],
        help=PARAMETER_HELP['verbose'],
        validator=validate_verbose_level,
    )


def seed_param():
    return Parameter(name=["--seed", "-s"], help=PARAMETER_HELP['seed'], validator=validate_non_negative)


def algorithm_param():
    return Parameter(
        name=["--algorithm", "-a"],
        help=PARAMETER_HELP['algorithm'],
        validator=validate_choice(SUPPORTED_ALGORITHMS),
    )


def model_kind_param():
    return Parameter(
        name=["--kind", "-k"],
        help=PARAMETER_HELP['model_kind'],
        validator=validate_choice(SUPPORTED_MODEL_KINDS),
    )


def model_paths_param():
    return Parameter(name=["--model", "-m"], help=PARAMETER_HELP['model_paths'], consume_multiple=True)


def schemes_param():
    return Parameter(name=["--scheme"], help=PARAMETER_HELP['schemes'], consume_multiple=True)


# Annotated types used directly in command signatures
ConfigFileParam = Annotated[Optional[Path], config_file_param()]
OutputPathParam = Annotated[Optional[Path], output_path_param()]
VerboseParam = Annotated[int, verbose_param()]
SeedParam = Annotated[Optional[int], seed_param()]
ModelPathsParam = Annotated[Optional[List[Path]], model_paths_param()]
