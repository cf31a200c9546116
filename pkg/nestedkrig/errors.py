"""
Exception hierarchy for nestedkrig.

Every error raised on purpose by the package derives from NestedKrigError and
carries a machine-readable ``category`` plus the process exit code the CLI
reports for it:

- ArgumentError (``validation``, exit 1): bad inputs, violated preconditions
- NumericalError (``numerical``, exit 2): factorizations that fail beyond the
  jitter/ridge policy, degenerate weights, broken variances
"""

from typing import Optional, Tuple


class NestedKrigError(Exception):
    """Base class for all nestedkrig errors."""

    category = "internal"
    exit_code = 3


# ===== VALIDATION ERRORS =====


class ArgumentError(NestedKrigError, ValueError):
    """Invalid argument or violated precondition."""

    category = "validation"
    exit_code = 1


class DimensionMismatchError(ArgumentError):
    """Point dimension differs from the kernel dimension."""


class EmptyPointSetError(ArgumentError):
    """An operation needs at least one point."""


class PartitionError(ArgumentError):
    """Partition does not satisfy the structural requirements of its consumer."""


class KernelNotQualifiedError(ArgumentError):
    """Kernel lacks the no-empty-ball property needed by the adversarial design."""


class ConfigError(ArgumentError):
    """Invalid run configuration file or flags."""


class DatasetError(ArgumentError):
    """Malformed dataset file; ``line`` is the 1-based line in the file."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# ===== NUMERICAL ERRORS =====


class NumericalError(NestedKrigError, ArithmeticError):
    """Numerical failure beyond the regularization policy."""

    category = "numerical"
    exit_code = 2


class SingularMatrixError(NumericalError):
    """
    Kernel matrix could not be factorized even at maximum jitter.

    ``pair`` holds the row indices of the closest pair of design points, the
    usual culprit.
    """

    def __init__(self, message: str, pair: Optional[Tuple[int, int]] = None) -> None:
        self.pair = pair
        super().__init__(message)


class SingularAggregationError(NumericalError):
    """Submodel covariance K_M(x) singular beyond the ridge policy."""

    def __init__(self, message: str, pair: Optional[Tuple[int, int]] = None) -> None:
        self.pair = pair
        super().__init__(message)


class DegenerateWeightsError(NumericalError):
    """BCM or rBCM weight denominator is not positive."""


class NegativeVarianceError(NumericalError):
    """A computed variance is negative beyond rounding tolerance."""


class SamplingError(NumericalError):
    """Sampling covariance could not be factorized."""
