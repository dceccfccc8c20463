"""Exception types shared across the package."""


class ScenefitError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(ScenefitError, ValueError):
    """Raster/depth/mask dimensions disagree with their camera."""


class EmptyInputError(ScenefitError, ValueError):
    """An operation received an empty mesh, cloud, or all-invalid depth map."""


class DegenerateInputError(ScenefitError, ValueError):
    """Input geometry is degenerate for the requested solve (too few points,
    collinear or zero-variance point sets, zero-volume grids)."""


class AlignmentDivergedError(ScenefitError, RuntimeError):
    """Iterative alignment left the trusted parameter range."""


class BackendError(ScenefitError, RuntimeError):
    """The inpainting backend failed or returned a malformed response."""


class SchedulingError(ScenefitError, RuntimeError):
    """Segment scheduling aborted; carries the checkpoint path if one was written."""

    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class ConfigError(ScenefitError, ValueError):
    """Invalid or incomplete configuration."""


class StageError(ScenefitError, RuntimeError):
    """A pipeline stage failed; carries the stage name for resumable reporting."""

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
