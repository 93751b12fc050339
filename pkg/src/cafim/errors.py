"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid inputs, file contents, or configuration."""


class ConfigError(ValidationError):
    """Configuration file violates the schema."""


class NumericalError(RuntimeError):
    """A solver or optimizer diverged beyond recovery."""
