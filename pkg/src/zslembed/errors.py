"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
ConvergenceError -> 4 (under --strict).
"""


class ZslError(Exception):
    """Base class for all package errors."""


class ConfigError(ZslError):
    """Invalid experiment or generator configuration."""


class DataError(ZslError):
    """Malformed or inconsistent input data (files, matrices, labels)."""


class ConvergenceError(ZslError):
    """A solver failed to converge within its iteration budget."""
