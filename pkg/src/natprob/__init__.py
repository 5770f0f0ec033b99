"""Numerical checks of projection-statement probability on small quantum systems."""

__version__ = "0.1.0"
