"""Exception types raised across the package.

The command line maps these onto exit codes: configuration problems exit
with 2, numerical failures with 3 and budget overruns with 4.
"""


class ZNEError(Exception):
    """Base class for every error raised by globalzne."""

    exit_code = 1


class ConfigError(ZNEError, ValueError):
    """Invalid scenario, pipeline or integrator configuration."""

    exit_code = 2


class DomainError(ConfigError):
    """An argument lies outside the supported domain (e.g. G < 1)."""


class UnsupportedVisualizationError(ConfigError):
    pass


class NumericalError(ZNEError, ArithmeticError):
    """A computation produced unusable numbers."""

    exit_code = 3


class IntegrationDivergedError(NumericalError):
    pass


class CorruptedStateError(NumericalError):
    """A state or expectation value failed a consistency check."""


class DegenerateNodesError(NumericalError, ValueError):
    """Two amplification factors coincide."""


class InsufficientPointsError(NumericalError, ValueError):
    """Fewer data points than free parameters in the model."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class ConditioningError(NumericalError):
    """Design matrix is rank deficient or too ill-conditioned."""


class DegenerateRatioError(NumericalError):
    pass


class NonDecayingDataError(NumericalError):
    """Data are incompatible with a decaying exponential model."""


class BudgetExceededError(ZNEError):
    exit_code = 4


class ConditioningWarning(UserWarning):
    pass


class WeakNoiseWarning(UserWarning):
    """Some rate times the horizon is no longer small."""
