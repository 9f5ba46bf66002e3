"""Fractional-programming solvers for the WSEE power control problem."""
