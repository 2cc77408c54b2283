"""Exception hierarchy shared across the package."""


class TemperlabError(Exception):
    """Base class for all package errors."""


class DomainError(TemperlabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(TemperlabError, ValueError):
    """Array dimensions do not agree."""


class KernelValidationError(TemperlabError, ValueError):
    """A matrix/density pair fails the invariants of an exact kernel."""


class ReversibilityError(TemperlabError, ValueError):
    """A reversible kernel was required but detailed balance fails."""


class SizeCapError(TemperlabError):
    """A dense construction would exceed the configured state-count cap."""


class ConfigError(TemperlabError, ValueError):
    """An experiment configuration is malformed."""


class BoundViolationError(TemperlabError, AssertionError):
    """A lower bound exceeded the exact quantity it is supposed to bound."""
