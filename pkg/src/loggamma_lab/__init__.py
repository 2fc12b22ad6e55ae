"""Numerical laboratory for the log-gamma directed polymer."""

__version__ = "0.1.0"
