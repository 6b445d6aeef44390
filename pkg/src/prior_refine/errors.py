"""Exception hierarchy shared across the pipeline."""


class PriorRefineError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PriorRefineError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class NumericalInstabilityError(PriorRefineError, RuntimeError):
    """A solver produced non-finite values; message names the offending step."""


class TrainingDivergedError(PriorRefineError, RuntimeError):
    """Training loss became non-finite; message carries diagnostics."""


class SamplingDivergedError(PriorRefineError, RuntimeError):
    """Sampler state became non-finite mid-trajectory."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite sampler state at step {step}")


class DegenerateScalerError(PriorRefineError, ValueError):
    """Residual extrema coincide; the affine map to [-1, 1] is undefined."""


class ContainerError(PriorRefineError):
    """Base class for container (manifest + blob) load failures."""


class VersionMismatchError(ContainerError):
    """Container was written by an incompatible format version."""


class TruncatedBlobError(ContainerError):
    """Blob file is shorter than the manifest-declared payload."""


class ShapeMismatchError(ContainerError):
    """Manifest-declared shapes disagree with the blob payload."""


class InternalError(PriorRefineError, RuntimeError):
    """An internal consistency check failed (not a user input problem)."""


class ConfigError(PriorRefineError, ValueError):
    """Pipeline configuration is malformed; message names the offending key."""


class PreconditionError(PriorRefineError, RuntimeError):
    """A pipeline stage was invoked before its upstream artifacts exist."""


class LineageError(PriorRefineError, RuntimeError):
    """Artifacts fed to a stage were produced under mismatched config hashes."""
