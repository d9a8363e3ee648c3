"""Bayes and minimax estimation of incurred loss, with Monte-Carlo risk verification."""

from .errors import DivergenceError, DomainError, MomentError, UnsupportedError

__version__ = "0.1.0"

__all__ = ["DivergenceError", "DomainError", "MomentError", "UnsupportedError", "__version__"]
