"""Exception hierarchy.

Every error the library raises carries a stable ``category`` string so the
CLI can emit machine-readable JSON on stderr.
"""


class AkdiffError(Exception):
    """Base class for all library errors."""

    category = "error"


class DimensionError(AkdiffError):
    """Array shape is empty, mismatched, or otherwise unusable."""

    category = "invalid-dimension"


class ScheduleError(AkdiffError):
    """Diffusion schedule parameters violate monotonicity constraints."""

    category = "invalid-schedule"


class StepIndexError(AkdiffError):
    """Diffusion step index outside [0, N]."""

    category = "index-out-of-range"


class StepSizeError(AkdiffError):
    """Iteration diverged; the step size is too large."""

    category = "step-size"


class NumericalError(AkdiffError):
    """A numerical routine failed to make progress (e.g. CG divergence)."""

    category = "numerical-failure"


class CalibrationError(AkdiffError):
    """Calibration region too small or window does not fit."""

    category = "calibration"


class UndefinedReferenceError(AkdiffError):
    """Metric reference is degenerate (all zero)."""

    category = "undefined-reference"


class ContainerFormatError(AkdiffError):
    """Tensor container bytes do not match the declared layout."""

    category = "malformed-container"


class ConfigError(AkdiffError):
    """Run configuration failed validation."""

    category = "invalid-config"
