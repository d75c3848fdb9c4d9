"""Numerical laboratory for the inductive loop vertex expansion of 1D phi^4."""

__version__ = "0.1.0"
