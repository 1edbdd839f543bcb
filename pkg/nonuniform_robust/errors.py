"""Exception hierarchy with diagnostic information.

Every error carries a short ``cause`` and an actionable ``suggestion`` so the
CLI can print a one-line diagnostic plus a hint, and an ``exit_code`` used by
``cli.main``.
"""

from __future__ import annotations

from typing import Optional


class RobustnessError(Exception):
    """Base class for all errors raised by nonuniform_robust."""

    exit_code: int = 1

    def __init__(
        self,
        message: str,
        cause: Optional[str] = None,
        suggestion: Optional[str] = None,
    ):
        super().__init__(message)
        self.cause = cause or message
        self.suggestion = suggestion


# ── Usage errors (exit 1) ────────────────────────────────────────────────


class UsageError(RobustnessError):
    """Invalid flags, config file or omega/noise spec."""

    exit_code = 1


# ── Data errors (exit 2) ─────────────────────────────────────────────────


class DataError(RobustnessError):
    """Input data is malformed or does not satisfy a precondition."""

    exit_code = 2


class ParseError(DataError):
    """A CSV line could not be parsed or a cell is not numeric."""


class SchemaError(DataError):
    """The label column is missing or holds values outside {0, 1}."""


class ConstantFeature(DataError):
    """A feature column has zero variance."""

    def __init__(self, index: int, name: Optional[str] = None):
        label = f"{index} ({name})" if name else str(index)
        super().__init__(
            f"Feature {label} is constant",
            suggestion="Drop the column with --drop before training.",
        )
        self.index = index


class ConstantLabel(DataError):
    """All samples share one label."""


class InsufficientSamples(DataError):
    """Fewer samples than a statistic needs."""


class NoPositiveSamples(DataError):
    """The perturbed class has no samples."""


class EmptyInput(DataError):
    """An operation received an empty collection."""


class DimensionMismatch(DataError):
    """Array shapes disagree with the model or transform dimension."""

    def __init__(self, expected: int, got: int, what: str = "input"):
        super().__init__(
            f"Dimension mismatch for {what}: expected {expected}, got {got}",
            suggestion="Check that the data file uses the same feature columns as training.",
        )
        self.expected = expected
        self.got = got


class EmptyMutableSet(DataError):
    """A mask omega was requested with no mutable feature."""


# ── Numeric failures (exit 3) ────────────────────────────────────────────


class NumericError(RobustnessError):
    """A numerical routine could not produce a valid result."""

    exit_code = 3


class NotPositiveDefinite(NumericError):
    """A matrix expected to be symmetric positive definite is not."""


class NonInvertibleOmega(NumericError):
    """An omega transform has no usable inverse."""


class CalibrationFailed(NumericError):
    """Budget bisection did not reach the requested tolerance."""


class DomainError(NumericError):
    """An argument lies outside the function's domain."""
