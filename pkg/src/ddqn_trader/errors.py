"""Exception taxonomy shared across the package.

ConfigError and DataError flag problems a user can fix before anything runs;
NumericsError flags a runtime failure of the math itself. The CLI maps the
first two to exit code 2 and the rest to exit code 3.
"""


class ConfigError(ValueError):
    """Invalid configuration value or key."""


class DataError(ValueError):
    """Malformed or insufficient input data."""


class NumericsError(ArithmeticError):
    """Non-finite value produced during training or evaluation."""


class CheckpointError(ValueError):
    """Unreadable, corrupt, or version-incompatible checkpoint."""
