"""Exception types shared across the package."""


class MrsceneError(Exception):
    """Base class for all package errors."""


class ShapeError(MrsceneError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class ConfigError(MrsceneError, ValueError):
    """A configuration value is invalid or inconsistent with the data."""


class UsageError(MrsceneError, ValueError):
    """An operation was invoked in a way its contract forbids."""


class FormatError(MrsceneError, ValueError):
    """A serialized file violates its format."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(FormatError):
    """File ended before the declared payload was complete."""


class ManifestMismatchError(FormatError):
    """Sample contents disagree with the dataset manifest."""


class TrainingDivergedError(MrsceneError, RuntimeError):
    """Training produced a non-finite loss."""
