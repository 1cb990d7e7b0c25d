"""Exception hierarchy shared by all modules."""


class TmwSpdcError(Exception):
    """Base class for package errors."""


class ConfigError(TmwSpdcError, ValueError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


class DomainError(TmwSpdcError, ValueError):
    """Argument outside the physical or tabulated domain."""


class NumericError(TmwSpdcError, RuntimeError):
    """A numerical procedure failed to converge (CLI exit code 3)."""


class ResolutionError(NumericError):
    """A sampling grid is too coarse for the requested feature."""


class NoPhaseMatchingError(DomainError):
    """The mismatch has the wrong sign for quasi-phase matching."""


class InvalidStateError(TmwSpdcError, ValueError):
    """Biphoton state with inconsistent or colliding labels."""
