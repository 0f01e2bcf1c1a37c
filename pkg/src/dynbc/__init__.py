"""Finite-difference solvers for parabolic problems with dynamic boundary conditions."""

__version__ = "0.1.0"
