"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class RinError(Exception):
    """Base class for package-specific errors."""


class ConfigError(RinError):
    """Invalid configuration value, flag, or option combination."""


class DataError(RinError):
    """Malformed or inconsistent input data (corpus, schema, checkpoint)."""


class ShapeError(RinError):
    """Operand shapes incompatible with an operation's contract."""


class ContractError(RinError):
    """An operation was called outside its documented contract."""


class NumericError(RinError):
    """Non-finite values encountered during optimization."""
