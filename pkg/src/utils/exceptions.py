# src/utils/exceptions.py

"""
Exception hierarchy for the DiSeP converter simulation toolkit.

Every exception carries a human-readable message and a numeric code. The
code doubles as the process exit status of the command-line front end, so
each failure class maps to a distinct, scriptable status:

- 1: domain/precondition errors and missing roots
- 2: scenario validation errors
- 3: simulation did not settle within the horizon
- 4: artifact input/output failures
- 5: oracle verification tolerance breaches
- 6: numerical divergence guard
"""

from typing import Any, Dict, Optional

import structlog

logger = structlog.get_logger(__name__)


class DiSePError(Exception):
    """
    Base class for all errors raised by the toolkit.

    Attributes:
        message (str): Human-readable error message.
        code (int): Error code, also used as the CLI exit status.
    """

    default_code: int = 1

    def __init__(self, message: str, code: Optional[int] = None) -> None:
        self.message = message
        self.code = self.default_code if code is None else code
        super().__init__(message)
        logger.debug("exception_raised", exc_type=self.__class__.__name__, message=message, code=self.code)

    def __str__(self) -> str:
        return f"{self.__class__.__name__}: {self.message} (Code: {self.code})"


class DomainError(DiSePError):
    """
    Raised when an operation is called outside its mathematical domain.

    Example: the series envelope impedance evaluated at a non-positive
    current, or a zero-deviation search with no loop engagement.
    """


class NoRootError(DiSePError):
    """Raised when a bracketed root search finds no sign change."""


class ScenarioValidationError(DiSePError):
    """
    Raised when a scenario document violates the schema or a field invariant.

    Attributes:
        field (str): Dotted path of the offending field ("" for document-level errors).
        line (Optional[int]): Line in the source document, when it can be resolved.
    """

    default_code = 2

    def __init__(self, message: str, field: str = "", line: Optional[int] = None) -> None:
        self.field = field
        self.line = line
        location = field or "<document>"
        if line is not None:
            location = f"{location} (line {line})"
        super().__init__(f"{location}: {message}")


class NotSettledError(DiSePError):
    """Raised when a steady-state quantity is requested from an unsettled run."""

    default_code = 3


class ArtifactIOError(DiSePError):
    """Raised when a scenario or artifact file cannot be read or written."""

    default_code = 4


class OracleToleranceError(DiSePError):
    """
    Raised when the closed-form/oracle comparison breaches a tolerance.

    Attributes:
        draw (Dict[str, Any]): The offending parameter draw.
    """

    default_code = 5

    def __init__(self, message: str, draw: Optional[Dict[str, Any]] = None) -> None:
        self.draw = draw or {}
        super().__init__(message)


class SimulationDivergenceError(DiSePError):
    """Raised when a capacitor voltage leaves the physically plausible range."""

    default_code = 6


def log_and_raise(exception: DiSePError) -> None:
    """
    Logs the exception at error level and raises it.

    Args:
        exception (DiSePError): The exception to log and raise.
    """
    logger.error("error", detail=str(exception), code=exception.code)
    raise exception
