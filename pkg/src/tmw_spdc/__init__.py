"""Simulator for SPDC photon-pair circuits in Ti-diffused LiNbO3 two-mode waveguides."""

from .errors import (ConfigError, DomainError, InvalidStateError, NoPhaseMatchingError, NumericError,
                     ResolutionError, TmwSpdcError)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "InvalidStateError",
    "NoPhaseMatchingError",
    "NumericError",
    "ResolutionError",
    "TmwSpdcError",
    "__version__",
]
