"""CLI module for wsee-unfold."""

__all__ = [
    "constants",
    "parameters",
    "service",
    "utils",
]
