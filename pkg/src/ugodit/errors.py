"""Exception taxonomy shared across the package."""


class UgoditError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(UgoditError):
    """An invalid knob value or an inconsistent configuration."""


class ContractError(UgoditError):
    """A call-site contract violation, typically a shape mismatch."""


class ArchitectureError(UgoditError):
    """Parameters and architecture spec do not belong together."""


class DivergenceError(UgoditError):
    """The optimization produced a non-finite loss."""


class DataError(UgoditError):
    """Dataset ingestion failed (missing path, too few images, bad format)."""


class UndefinedRatioError(UgoditError):
    """A spectral ratio was requested for an all-zero feature map."""


class CheckpointFormatError(UgoditError):
    """Checkpoint or array file does not start with the expected magic."""


class CheckpointVersionError(UgoditError):
    """Checkpoint was written by a newer format version than this reader."""


class CheckpointIntegrityError(UgoditError):
    """Stored fingerprint does not match the embedded architecture spec."""


class CheckpointCorruptionError(UgoditError):
    """Checkpoint payload contains non-finite values."""
