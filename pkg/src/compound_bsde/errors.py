"""Exception hierarchy.  Every error carries a stable ``code`` used by the CLI."""


class CompoundBSDEError(Exception):
    code = "error"
    exit_code = 1


class ValidationError(CompoundBSDEError, ValueError):
    code = "invalid_parameters"
    exit_code = 2


class NonMonotoneTimes(ValidationError):
    code = "non_monotone_times"


class NoCommonStep(ValidationError):
    code = "no_common_step"


class OutOfRange(ValidationError):
    code = "out_of_range"


class InvalidTimes(ValidationError):
    code = "invalid_times"


class InvalidCorrelation(ValidationError):
    code = "invalid_correlation"


class CholeskyFailure(ValidationError):
    code = "cholesky_failure"


class ShapeMismatch(ValidationError):
    code = "shape_mismatch"


class DimensionMismatch(ShapeMismatch):
    code = "dimension_mismatch"


class NonDiagonalSigma(ValidationError):
    code = "non_diagonal_sigma"


class NonPositiveState(ValidationError):
    code = "non_positive_state"


class DateMappingCollision(ValidationError):
    code = "date_mapping_collision"


class OutOfDomain(ValidationError):
    code = "out_of_domain"


class RecursionDepth(ValidationError):
    code = "recursion_depth"


class NumericalError(CompoundBSDEError, ArithmeticError):
    code = "numerical_error"
    exit_code = 3


class NonFiniteGradient(NumericalError):
    code = "non_finite_gradient"


class NonFiniteValue(NumericalError):
    code = "non_finite_value"


class Diverged(NumericalError):
    code = "diverged"


class NoSignChange(NumericalError):
    code = "no_sign_change"


class BracketFailure(NoSignChange):
    code = "bracket_failure"


class MaxIterations(NumericalError):
    code = "max_iterations"


class ToleranceNotReached(NumericalError):
    code = "tolerance_not_reached"


class ReferenceUnavailable(CompoundBSDEError):
    code = "reference_unavailable"
    exit_code = 4
