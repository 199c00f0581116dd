"""Sparse weighted oblique decision trees for power-system security rules."""

__version__ = "0.1.0"
