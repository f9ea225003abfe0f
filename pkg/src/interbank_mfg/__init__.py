"""Interbank lending and systemic risk: coupled diffusions and their LQ game equilibria."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ConvexityViolated,
    DomainError,
    EquilibriumMode,
    ModelParams,
    ParameterError,
    load_config,
    validate,
)

__all__ = [
    "__version__",
    "ConvexityViolated",
    "DomainError",
    "EquilibriumMode",
    "ModelParams",
    "ParameterError",
    "load_config",
    "validate",
]
