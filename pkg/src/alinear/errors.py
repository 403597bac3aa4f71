"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
DataError -> 2, DivergenceError -> 3.
"""


class AlinearError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AlinearError):
    """Invalid experiment configuration (bad field, unknown mode, empty grid)."""


class DataError(AlinearError):
    """Dataset problem: missing file, malformed row, bad split, short range."""


class DivergenceError(AlinearError):
    """Non-finite loss, gradient, or parameter update during optimization."""
