"""Exception types shared across the package."""


class HooptError(Exception):
    """Base class for all package errors."""


class InputDomainError(HooptError, ValueError):
    """An argument lies outside the domain of the operation."""


class InsufficientDataError(HooptError, ValueError):
    """Not enough samples/rows to compute the requested quantity."""


class ConfigurationError(HooptError, ValueError):
    """Invalid simulation, sweep or run configuration.

    ``key`` names the offending configuration entry when known.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ParseError(HooptError, ValueError):
    """Malformed dataset or model file."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedModelError(HooptError, TypeError):
    """The operation is not defined for this model kind."""


class NoFeasiblePointError(HooptError, RuntimeError):
    """No candidate satisfies the optimization constraints."""


class HandoverLogicError(HooptError, RuntimeError):
    """Raised when the trigger logic asks for an impossible handover."""
