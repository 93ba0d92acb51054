"""Exception types shared across the package.

The CLI maps these onto exit codes: DataValidationError -> 3,
NumericError -> 4.
"""


class CascadeInfluenceError(Exception):
    """Base class for all package errors."""


class DataValidationError(CascadeInfluenceError, ValueError):
    """Malformed or inconsistent input data (files, configs, arguments)."""


class NumericError(CascadeInfluenceError, RuntimeError):
    """Numerical failure: unstable parameters, diverging optimizer, etc."""


class ConfigError(DataValidationError):
    """Config file failed validation; carries the full error list."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
