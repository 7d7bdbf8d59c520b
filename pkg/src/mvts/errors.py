"""Exception hierarchy shared by every module in the package."""


class MvtsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MvtsError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(MvtsError):
    """A configuration value is out of range, unknown, or inconsistent."""


class UsageError(MvtsError):
    """An API was called in a way its contract forbids."""


class DataError(MvtsError):
    """A dataset cannot satisfy the request (missing labels, too few samples)."""


class FormatError(MvtsError):
    """A serialized file is malformed or has an unsupported version."""
