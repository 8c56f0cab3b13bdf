"""Simulation and analysis toolkit for generalized-CHSH Bell experiments."""

__version__ = "0.1.0"
