"""Exception hierarchy shared across the package."""


class DiffdriveError(Exception):
    """Base class for package errors."""


class ValidationError(DiffdriveError):
    """Inputs violate an operation's preconditions (shapes, finiteness, masks)."""


class ConfigError(DiffdriveError):
    """Configuration file or parameter is malformed or out of range."""


class MissingArtifactError(DiffdriveError):
    """A pipeline stage requires an artifact a prior stage has not produced."""


class LoadError(DiffdriveError):
    """A persisted artifact is corrupt, truncated, or version-incompatible."""
