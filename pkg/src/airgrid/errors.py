"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: missing inputs -> 2,
validation failures -> 3, numeric divergence -> 4.
"""


class AirgridError(Exception):
    """Base class for all package errors."""


class InvalidInputError(AirgridError):
    """Malformed or out-of-contract input (bad bbox, station outside area, ...)."""


class InsufficientDataError(AirgridError):
    """Not enough data to proceed (too few context grids, series too short)."""


class MissingDataError(AirgridError):
    """NaNs present where a complete series is required."""


class NoContextError(AirgridError):
    """Interpolation requested with an empty context set."""


class SchemaError(AirgridError):
    """Feature schema inconsistent with the assembled tensor or config."""


class DivergenceError(AirgridError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class MissingArtifactError(AirgridError):
    """A required input file or checkpoint does not exist."""
