"""Exact small-system simulation of continuous-time quantum optimisation."""

__version__ = "0.1.0"
