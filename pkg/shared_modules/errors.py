"""
AirFC Simulator - Exceptions
============================

One small hierarchy so the CLI can map failures to exit codes:
ConfigError -> 2, every other AirFCError -> 3.
"""


class AirFCError(Exception):
    """Base class for all simulator errors."""


class ConfigError(AirFCError):
    """Invalid experiment or training configuration."""


class DimensionMismatch(AirFCError, ValueError):
    """Operand shapes do not agree with each other or with the system config."""


class NotHermitian(AirFCError, ValueError):
    """Matrix asymmetry beyond the Hermitian tolerance."""


class IndefiniteInput(AirFCError, ValueError):
    """Eigenvalue below the PSD clamp threshold."""


class IdxFormatError(AirFCError):
    """Malformed IDX dataset file."""


class BadMagic(IdxFormatError):
    pass


class TruncatedFile(IdxFormatError):
    pass


class CountMismatch(IdxFormatError):
    pass


class EmptyDataset(AirFCError):
    pass


class TrainingDiverged(AirFCError, RuntimeError):
    """Loss became NaN/Inf during training."""
