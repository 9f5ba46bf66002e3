"""Fractional-programming power control solvers and their deep-unfolded models."""
from __future__ import annotations

__version__ = "0.1.0"
