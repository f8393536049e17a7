"""Exception types shared across the package, with their CLI exit codes."""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4


class GasOracleError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 1


class ConfigError(GasOracleError):
    """Bad CLI arguments, config file, or option combination."""

    exit_code = EXIT_CONFIG


class DataError(GasOracleError):
    """Input data is missing, malformed, or inconsistent."""

    exit_code = EXIT_DATA


class ParseError(DataError):
    """Malformed row or value in an input file."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OrderingError(DataError):
    """Block numbers are not strictly increasing."""


class SchemaError(DataError):
    """File or RPC payload does not match the expected schema."""


class FetchError(DataError):
    """RPC fetch failed after exhausting retries."""


class InsufficientHistoryError(DataError):
    """Not enough past blocks for the requested window."""


class NumericalError(GasOracleError):
    """Linear-algebra failure after all fallbacks (jitter ladder exhausted)."""

    exit_code = EXIT_DATA


class FitError(NumericalError):
    """Every hyperparameter start failed numerically."""


class InvariantViolation(GasOracleError):
    """A hard model invariant (e.g. monotonicity in alpha) failed at run time."""

    exit_code = EXIT_INVARIANT
