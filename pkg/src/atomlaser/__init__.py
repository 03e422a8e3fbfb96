"""Linewidth of a continuously pumped atom laser with non-Markovian output coupling."""
from .core import (
    ConfigError,
    ConvergenceError,
    NumericalError,
    PhysicalParams,
    RunConfig,
    load_config,
    paper_params,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "NumericalError",
    "PhysicalParams",
    "RunConfig",
    "load_config",
    "paper_params",
]
