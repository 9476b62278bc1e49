"""Exception types shared across the package."""


class MosbenchError(Exception):
    """Base class for package-specific errors."""


class ManifestError(MosbenchError, ValueError):
    """A corpus manifest is structurally malformed or inconsistent."""


class AudioReadError(MosbenchError, OSError):
    """An audio file is missing or cannot be decoded."""


class ValidationError(MosbenchError, ValueError):
    """A value violates a documented precondition or invariant."""


class UndefinedCorrelationError(MosbenchError, ValueError):
    """A correlation was requested for degenerate (constant) input."""


class TrainingDivergedError(MosbenchError, RuntimeError):
    """Optimization produced a non-finite loss."""


class ConfigError(MosbenchError, ValueError):
    """A run configuration contains an unknown key or a bad value."""
