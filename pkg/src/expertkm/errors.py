"""Exception hierarchy.

Two families matter operationally: ``ValidationError`` (bad inputs or
configuration, CLI exit code 2) and ``NumericalError`` (estimation became
degenerate or undefined, CLI exit code 3).
"""


class ExpertKMError(Exception):
    """Base class for all package errors."""


class ValidationError(ExpertKMError):
    """Invalid input data, target arrays, or configuration."""


class MissingColumnError(ValidationError):
    pass


class NonBinaryIndicatorError(ValidationError):
    pass


class NegativeTimeError(ValidationError):
    pass


class RaggedCovariatesError(ValidationError):
    pass


class MissingJudgmentsError(ValidationError):
    """An operation requiring adjudication indicators got none."""


class ConfigError(ValidationError):
    pass


class NumericalError(ExpertKMError):
    """Estimation failed for numerical reasons (degenerate or undefined)."""


class ZeroDensityError(NumericalError):
    """No observation carries positive kernel weight at the query point."""


class DenominatorUnderflowError(NumericalError):
    """A risk-set denominator fell below the configured floor."""


class JumpOutOfRangeError(NumericalError):
    """A cumulative-hazard increment left [0, 1]."""


class SaturatedJumpError(NumericalError):
    """A hazard increment of 1 makes the requested variance undefined."""


class BothDensitiesZeroError(NumericalError):
    """Adjudication probability undefined where both densities vanish."""


class AllCandidatesDegenerateError(NumericalError):
    """Every candidate bandwidth produced an undefined cross-validation score."""


class QuadratureError(NumericalError):
    """Numerical integration did not converge to the requested tolerance."""
