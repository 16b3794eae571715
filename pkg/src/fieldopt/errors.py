"""Exception hierarchy and the process exit codes attached to it."""


class FieldOptError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class SpecError(FieldOptError):
    """A trial specification, input file, or argument is invalid."""

    exit_code = 2


class ConfigError(SpecError):
    """An engine or run configuration value is out of range."""


class NumericalError(FieldOptError):
    """A linear-algebra step failed (singular system, non-convergence)."""

    exit_code = 3


class SingularMatrixError(NumericalError):
    """A matrix that must be invertible is numerically singular."""


class RankDeficiencyError(NumericalError):
    """The fixed-effect matrix does not have full column rank."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class InfeasibleError(FieldOptError):
    """No feasible design exists or none could be constructed in time."""

    exit_code = 4


class CapacityMismatchError(InfeasibleError):
    """Requested entries do not fit the available plots or slots."""


class StepGenerationStalledError(InfeasibleError):
    """Interchange sampling exhausted its retry budget."""

    def __init__(self, message, rejected):
        super().__init__(message)
        self.rejected = rejected
