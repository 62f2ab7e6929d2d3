"""Exception types shared across the package."""


class SubspectraError(Exception):
    pass


class SizeLimitError(SubspectraError, ValueError):
    """Requested combinatorial size exceeds the supported range."""


class InvalidPartitionError(SubspectraError, ValueError):
    """A set partition violates the non-crossing (or covering) invariants."""


class UnsupportedOrderError(SubspectraError, ValueError):
    """A cumulant order is not available for this kernel or grid budget."""


class UndefinedSTransformError(SubspectraError, ValueError):
    """S-transform requested for a series with vanishing first cumulant."""


class DomainError(SubspectraError, ValueError):
    """Argument outside the mathematical domain of the operation."""


class ConvergenceError(SubspectraError, RuntimeError):
    """Iteration failed to reach tolerance; carries the last residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BranchError(SubspectraError, RuntimeError):
    """Iterate left the physical solution branch (division blowup)."""


class NoSolutionError(SubspectraError, RuntimeError):
    """An auxiliary scalar equation has no root in the admissible region."""


class ConditioningError(SubspectraError, RuntimeError):
    """Numerical extraction is too ill-conditioned at the requested order."""


class RootTrackingError(SubspectraError, RuntimeError):
    """Newton continuation lost the root it was tracking."""


class StabilityError(SubspectraError, RuntimeError):
    """Time integration became unstable; reduce the step size."""


class ConfigError(SubspectraError, ValueError):
    """Run configuration failed schema validation."""
