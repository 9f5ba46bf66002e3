# wsee_unfold/utils/logging_setup.py
from __future__ import annotations

import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Tuple

import loguru as lg

global_logger = lg.logger

DEFAULT_COMPONENT = "wsee_unfold"

# verbose level -> console level; anything above the table prints TRACE (per-iteration solver values)
_CONSOLE_LEVELS = ("WARNING", "INFO", "DEBUG")

_CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<magenta>{extra[component]: <10}</magenta> | <level>{message}</level>"
)
_FILE_FORMAT = (
    "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {extra[component]: <12} | "
    "{name}:{function}:{line} - {message}"
)

# (file prefix, level, extra sink options)
_FILE_SINKS: Tuple[Tuple[str, str, Dict[str, Any]], ...] = (
    ("wsee_trace", "TRACE", {"retention": 10, "backtrace": True, "diagnose": True, "catch": True}),
    ("wsee_debug", "DEBUG", {"retention": 5}),
)


def console_level(verbose_lvl: int) -> str:
    return _CONSOLE_LEVELS[verbose_lvl] if verbose_lvl < len(_CONSOLE_LEVELS) else "TRACE"


def configure_logger(verbose_lvl: int, log_dir: Path) -> lg.Logger:
    """
    Reset the global loguru logger for one wsee-unfold run.

    The console sink follows ``verbose_lvl`` (-1 silences it). Every run also
    writes an hourly DEBUG file and a TRACE file under ``log_dir``; records
    carry the ``component`` bound by the emitting module (solver, dataset,
    training, bench, ...).

    Args:
        verbose_lvl: -1=quiet, 0=WARNING, 1=INFO, 2=DEBUG, 3=TRACE.
        log_dir: Directory for the run's log files.
    Returns:
        The configured global logger.
    """
    global_logger.remove()
    global_logger.configure(extra={"component": DEFAULT_COMPONENT})

    if verbose_lvl >= 0:
        level = console_level(verbose_lvl)
        global_logger.add(sys.stderr, level=level, colorize=True, format=_CONSOLE_FORMAT)
        global_logger.debug(f"Console logging at {level}")

    run_stamp = datetime.now().strftime("%Y%m%d_%Hh")
    try:
        log_dir.mkdir(parents=True, exist_ok=True)
        for prefix, level, options in _FILE_SINKS:
            global_logger.add(
                log_dir / f"{prefix}_{run_stamp}.log",
                level=level,
                format=_FILE_FORMAT,
                rotation="1 GB",
                encoding="utf-8",
                enqueue=True,
                **options,
            )
        global_logger.debug(f"File logging under '{log_dir}'")
    except OSError as e:
        global_logger.error(f"Could not set up file logging in '{log_dir}': {e}")

    return global_logger
