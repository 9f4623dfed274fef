"""Exception types shared across the package.

The CLI maps these onto exit codes: config problems -> 2, numeric
failures -> 3, unreadable or malformed data files -> 4.
"""


class DomainError(ValueError):
    """An argument lies outside its mathematical domain."""


class ShapeError(ValueError):
    """Array shapes are inconsistent with each other or the model."""


class ConfigError(ValueError):
    """A configuration document or derived setting is invalid."""


class NumericError(RuntimeError):
    """A computation produced non-finite values or failed to converge."""


class DataFormatError(ValueError):
    """A data file could not be parsed against its schema."""
