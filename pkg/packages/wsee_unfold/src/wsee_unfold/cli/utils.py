"""
Helpers shared by the wsee-unfold commands: the CLIError type and its mapping
from library exceptions, input/output path checks, settings resolution and
the one-line status messages printed after each command.
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Any, Mapping, NoReturn, Optional, Tuple, Type

import loguru as lg
from pydantic import ValidationError

from wsee_unfold.cli.constants import (
    ERROR_MESSAGES,
    ERROR_SUGGESTIONS,
    EXIT_INVALID_INPUT,
    EXIT_RUNTIME_FAILURE,
)
from wsee_unfold.core.exceptions import InvalidInputError, ModelNotTrainedError, ShapeError
from wsee_unfold.settings import WseeUnfoldSettings

# Library exceptions that mean "the user handed us something unusable".
_INPUT_ERRORS: Tuple[Type[BaseException], ...] = (
    InvalidInputError,
    ShapeError,
    ValidationError,
    FileNotFoundError,
)

_MISSING_INPUT_HINTS = {
    "dataset": ERROR_SUGGESTIONS['gen_data_first'],
    "model file": ERROR_SUGGESTIONS['train_first'],
    "configuration file": ERROR_SUGGESTIONS['config_fix'],
}


class CLIError(Exception):
    """An error carrying the message, an optional hint and the process exit code."""

    def __init__(self, message: str, suggestion: Optional[str] = None, exit_code: int = EXIT_INVALID_INPUT):
        self.message = message
        self.suggestion = suggestion
        self.exit_code = exit_code
        super().__init__(message)


def as_cli_error(error: Exception, context: str) -> CLIError:
    """Wrap ``error`` as a CLIError: input problems exit with 1, anything else with 2."""
    if isinstance(error, CLIError):
        return error
    message = f"{context}: {error}"
    if isinstance(error, ModelNotTrainedError):
        return CLIError(message, ERROR_SUGGESTIONS['train_first'])
    if isinstance(error, _INPUT_ERRORS):
        return CLIError(message)
    return CLIError(message, exit_code=EXIT_RUNTIME_FAILURE)


def handle_cli_error(error: Exception, logger: lg.Logger) -> NoReturn:
    """
    Log ``error``, print its hint and terminate with the mapped exit code.

    Args:
        error: A CLIError, or any exception escaping a command (treated as a runtime failure)
        logger: Logger used for the error record
    """
    cli_error = error if isinstance(error, CLIError) else None
    if cli_error is None:
        logger.opt(exception=error).error(f"Unexpected error: {error}")
        print("💡 This appears to be an unexpected error. Please check the logs for details.", file=sys.stderr)
        sys.exit(EXIT_RUNTIME_FAILURE)

    logger.error(cli_error.message)
    if cli_error.suggestion:
        print(f"💡 Suggestion: {cli_error.suggestion}", file=sys.stderr)
    sys.exit(cli_error.exit_code)


def require_input_file(path: Path, kind: str = "file") -> Path:
    """
    Return ``path`` if it names an existing file.

    Raises:
        CLIError: Exit code 1, with a hint naming the command that produces ``kind``
    """
    if not path.is_file():
        hint = _MISSING_INPUT_HINTS.get(kind, f"Ensure the {kind} exists and is readable.")
        raise CLIError(ERROR_MESSAGES['file_not_found'].format(path=path), hint)
    return path


def resolve_output_path(
    explicit: Optional[Path],
    base_dir: Path,
    stem: str,
    extension: str,
    logger: lg.Logger,
) -> Path:
    """
    Pick the output file (``explicit`` or ``<base_dir>/<stem>.<extension>``) and create its parent.

    Raises:
        CLIError: Exit code 2 when the directory cannot be created
    """
    path = explicit if explicit is not None else base_dir / f"{stem}.{extension.lstrip('.')}"
    parent = path.parent
    try:
        parent.mkdir(parents=True, exist_ok=True)
    except PermissionError:
        raise CLIError(
            ERROR_MESSAGES['permission_denied'].format(path=parent),
            ERROR_SUGGESTIONS['permission_fix'],
            EXIT_RUNTIME_FAILURE,
        )
    logger.debug(f"Writing output to {path}")
    return path


def load_settings_with_overrides(config_file: Optional[Path] = None, **overrides: Any) -> WseeUnfoldSettings:
    """
    Build the run settings from ``config_file`` (or the defaults) and the CLI flags that were given.

    Raises:
        CLIError: Exit code 1 for a missing, unparsable or invalid configuration
    """
    given = {name: value for name, value in overrides.items() if value is not None}
    if config_file is not None:
        require_input_file(config_file, "configuration file")
    try:
        settings = WseeUnfoldSettings.from_file(config_file) if config_file is not None else WseeUnfoldSettings()
    except Exception as e:
        raise CLIError(
            ERROR_MESSAGES['config_load_error'].format(path=config_file or "defaults", error=e),
            ERROR_SUGGESTIONS['config_fix'],
        )
    return settings.model_copy(update=given) if given else settings


def print_success(message: str, details: Optional[Mapping[str, Any]] = None) -> None:
    print(f"✅ {message}")
    for key, value in (details or {}).items():
        print(f"   {key}: {value}")


def print_warning(message: str, suggestion: Optional[str] = None) -> None:
    print(f"⚠️  {message}")
    if suggestion:
        print(f"   💡 {suggestion}")
