"""Inhomogeneous zero range processes on finite cubes: exact measures, generators and spectral constants."""

from .errors import InvalidInput, NumericalFailure, ZRPError
from .lattice import Lattice, complete_graph, cube, segment
from .model import RateFamily, canonical, preset

__version__ = "0.1.0"

__all__ = ["InvalidInput", "NumericalFailure", "ZRPError", "Lattice", "complete_graph", "cube",
           "segment", "RateFamily", "canonical", "preset", "__version__"]
