"""Differential-drag formation control of a CubeSat through effective-surface management."""

__version__ = "0.1.0"
