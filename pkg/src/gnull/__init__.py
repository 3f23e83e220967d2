"""Parametric g-formula estimation and g-null paradox analytics."""

__version__ = "0.1.0"
