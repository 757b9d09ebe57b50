"""Exception types shared across the package."""


class GridMismatchError(ValueError):
    """Array shape or grid identity does not match the operation's grid."""


class UnsupportedOrderError(ValueError):
    """Derivative order outside the supported range {1, 2}."""


class ParameterError(ValueError):
    """A physical or model parameter is outside its admissible range."""


class CostGuardError(RuntimeError):
    """A brute-force oracle was asked to run above its cost guard."""


class PicardConvergenceError(RuntimeError):
    """Picard iteration exceeded its iteration budget.

    Carries the last measured residual in ``residual``.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class InitialConditionError(ValueError):
    """Initial data could not be constructed (e.g. positivity rescue failed)."""


class ConfigError(ValueError):
    """Configuration text failed validation.

    ``violations`` lists every violated constraint, not just the first.
    """

    def __init__(self, violations):
        super().__init__("invalid configuration: " + "; ".join(violations))
        self.violations = list(violations)


class FitError(ValueError):
    """Decay fitting received unusable data (too short, non-positive, ...)."""
