"""Simulation and analysis toolkit for a heralded single-excitation source."""

__version__ = "0.1.0"

from .model import ModelParams, FigureOfMeritPoint  # noqa: F401
