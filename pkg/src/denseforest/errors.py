"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates a precondition (CLI exit code 2)."""


class WindowTooSmallError(ConfigError):
    """The periodic window cannot hold the requested scale without wrap ambiguity."""


class PointBudgetError(RuntimeError):
    """A build exceeded its configured cap on total points."""
