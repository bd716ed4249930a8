"""Numerical laboratory for derivatives of self-intersection local time of fractional Brownian motion."""

from .config import DomainError, ModelConfig

__version__ = "0.1.0"

__all__ = ["ModelConfig", "DomainError", "__version__"]
