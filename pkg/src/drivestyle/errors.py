"""Exception types shared across the pipeline."""


class DriveStyleError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(DriveStyleError):
    """Column mapping or unit declaration is missing or invalid."""


class DataError(DriveStyleError):
    """Input data violates an invariant (ordering, sign, overlap)."""


class ConfigError(DriveStyleError):
    """A configuration value is missing or out of range."""


class ExtractionError(DriveStyleError):
    """Event extraction cannot proceed on the given input."""


class DimensionError(DriveStyleError):
    """Vector or matrix dimensions do not match the expected shape."""


class InputError(DriveStyleError):
    """Training or evaluation input fails a precondition."""


class StratificationError(InputError):
    """A class is too small for the requested number of folds."""


class TransportError(DriveStyleError):
    """A remote backend call failed after retries."""


class ResponseFormatError(DriveStyleError):
    """A backend response could not be parsed; carries the raw text."""

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class DependencyError(DriveStyleError):
    """A pipeline stage is missing an upstream artifact."""


class ArtifactError(DriveStyleError):
    """A persisted artifact is malformed or has an unknown version."""
