"""Exception and warning types shared across the package."""


class MollipdeError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MollipdeError, ValueError):
    """An argument is malformed (non-finite, empty, out of range)."""


class ConfigurationError(MollipdeError):
    """Inconsistent configuration: mismatched spacings, shapes or presets."""


class KernelTooNarrowError(MollipdeError):
    """Support radius too small for the grid spacing or derivative order."""


class UnsupportedOrderError(MollipdeError):
    """Requested derivative order above what the stencil machinery supports."""


class DimensionError(MollipdeError):
    """Operation applied to a field of the wrong dimensionality."""


class DegenerateDenominatorError(MollipdeError):
    """Pointwise parameter recovery masked out more than half the grid."""

    def __init__(self, message: str, masked_fraction: float, threshold: float):
        super().__init__(message)
        self.masked_fraction = masked_fraction
        self.threshold = threshold


class UndefinedCorrelationError(MollipdeError):
    """Correlation requested for a zero-variance input."""


class NonFiniteGradientError(MollipdeError):
    """An optimizer step received a NaN/inf gradient; the step was rejected."""

    def __init__(self, step: int):
        super().__init__(f"non-finite gradient at optimizer step {step}; step rejected")
        self.step = step


class NonFiniteParameterError(MollipdeError):
    """Network parameters contain NaN/inf; the model state is poisoned."""


class TrainingDivergedError(MollipdeError):
    """Training loss became non-finite."""

    def __init__(self, message: str, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class StabilityError(MollipdeError):
    """Explicit time stepper blew up; reports the offending time step."""

    def __init__(self, message: str, time_step: float):
        super().__init__(message)
        self.time_step = time_step


class InputRangeError(MollipdeError, ValueError):
    """Input values outside the documented domain (e.g. densities not in [0,1])."""


class BoundarySmoothnessWarning(UserWarning):
    """Derivative order exceeds the kernel's smoothness at the support edge.

    Accuracy degrades gracefully rather than failing; emitted once per call
    site so ablation sweeps over kernel families stay runnable.
    """
