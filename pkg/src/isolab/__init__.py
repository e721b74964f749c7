"""Numerical workbench for Painleve VI, Schlesinger and elliptic Calogero flows."""

from .errors import (
    CollisionError,
    DegenerateInputError,
    IntegrationError,
    IsolabError,
    PoleError,
    SeriesConvergenceError,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "IsolabError",
    "SeriesConvergenceError",
    "PoleError",
    "IntegrationError",
    "CollisionError",
    "DegenerateInputError",
]
