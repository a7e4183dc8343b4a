"""Exception types shared across the package."""


class DimensionError(ValueError):
    """A profile, tensor, or parameter block does not match the expected shape."""


class SizeError(ValueError):
    """An instance is too large for an enumeration-based routine."""


class DataError(ValueError):
    """Payoff data is malformed (e.g. non-finite entries)."""


class SpecError(ValueError):
    """A generator spec is invalid for its game class."""


class ConfigError(ValueError):
    """A training, solver, or experiment config is invalid."""


class FormatError(ValueError):
    """A serialized file is corrupt or has an unsupported version.

    ``offset`` is the byte position at which decoding failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(ArithmeticError):
    """A numeric invariant broke at runtime (e.g. non-finite gradient)."""


class UsageError(RuntimeError):
    """An operation was called in an invalid order (e.g. stale cache)."""
