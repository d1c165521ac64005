"""Simulation and numerics for a mean-field two-type Fisher-Wright system."""

from .kernels import BACKEND
from .params import AtomicMeasure, Configuration, ModelParams, SeedSpec, derive_stream

__version__ = "0.1.0"

__all__ = [
    "AtomicMeasure",
    "BACKEND",
    "Configuration",
    "ModelParams",
    "SeedSpec",
    "derive_stream",
    "__version__",
]
