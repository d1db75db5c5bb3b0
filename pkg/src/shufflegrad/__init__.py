"""Finite-sum optimization with permutation-order gradient methods, plus a
numerical audit harness for their per-epoch inequalities and rates."""

from . import analysis, datasets, optimizer, problems, rng, schedules, shuffling
from .errors import ConfigError, DivergenceError

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "datasets",
    "optimizer",
    "problems",
    "rng",
    "schedules",
    "shuffling",
    "ConfigError",
    "DivergenceError",
    "__version__",
]
