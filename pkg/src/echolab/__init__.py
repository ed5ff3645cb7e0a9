"""Nonlinear time-reversal interferometry for collective spins."""

__version__ = "0.1.0"
