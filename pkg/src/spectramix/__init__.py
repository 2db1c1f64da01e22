"""Numerical checks of mixing, dephasing, phase-space calculus and random-matrix statistics."""

__version__ = "0.1.0"
