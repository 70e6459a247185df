"""Numerical functional Itô calculus on discretised paths."""

__version__ = "0.1.0"
