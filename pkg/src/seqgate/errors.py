"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class SeqgateError(Exception):
    """Base class for all package errors."""


class ConfigError(SeqgateError):
    """Invalid configuration, usage, or hyperparameter value."""


class DataError(SeqgateError):
    """Malformed, missing, or degenerate input data."""


class NumericalError(SeqgateError):
    """Numerical failure during fitting or evaluation (e.g. diverged loss)."""
