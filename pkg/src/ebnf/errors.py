"""Exception hierarchy.

Every error carries a numeric ``code`` so the CLI can print a stable
machine-readable prefix (``EBNF-E<code>:``). Validation problems map to exit
status 1, numerical failures to exit status 2.
"""

from __future__ import annotations


class EbnfError(Exception):
    code = 100
    exit_status = 1

    def __init__(self, message: str, ids: tuple[str, ...] = ()):
        super().__init__(message)
        self.ids = tuple(ids)


class ValidationError(EbnfError, ValueError):
    code = 101


class DuplicateIdError(ValidationError):
    code = 102


class DegreesOfFreedomError(ValidationError):
    """Raised when an operation needs k > 2 (or k > 0) and does not get it."""

    code = 103


class ConfigError(ValidationError):
    code = 104


class NumericalError(EbnfError, ArithmeticError):
    code = 200
    exit_status = 2


class DomainError(NumericalError):
    """An MGF argument lies outside the region where the shifted variance is positive.

    ``max_abs_t`` is the largest |t| (along the requested direction) that is
    still valid for the observation, so callers can rescale their evaluation
    points.
    """

    code = 201

    def __init__(self, message: str, max_abs_t: float, ids: tuple[str, ...] = ()):
        super().__init__(message, ids)
        self.max_abs_t = float(max_abs_t)


class SupportError(NumericalError):
    code = 202


class ConvergenceError(NumericalError):
    code = 203
