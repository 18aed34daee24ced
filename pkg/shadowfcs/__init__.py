"""Randomized-measurement simulation and classical-shadow estimation of
subsystem magnetization statistics in long-range XY spin chains."""

__version__ = "0.1.0"
