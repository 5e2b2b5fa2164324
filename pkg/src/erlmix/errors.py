"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4. DomainError signals invalid arguments to numeric kernels
and is a ValueError so misuse fails loudly in library code too.
"""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(Exception):
    """Invalid run configuration (schedule, hyperparameters, presets)."""


class DataError(Exception):
    """Malformed or inconsistent input data."""


class NumericError(ArithmeticError):
    """A computation lost all precision (e.g. every urn weight underflowed)."""
