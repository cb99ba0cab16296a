"""Numerical laboratory for an inductive polynomial-hull construction in the bidisk."""

__version__ = "0.1.0"
