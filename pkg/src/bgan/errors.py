"""Exception types shared across the package."""


class BganError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BganError):
    """Invalid configuration value or inconsistent option combination."""


class ShapeError(BganError):
    """Array dimensions do not match what an operation requires."""


class NumericError(BganError):
    """Non-finite values or numerical divergence encountered."""


class DataError(BganError):
    """Invalid data contents, e.g. class labels out of range."""


class FormatError(BganError):
    """Malformed binary or text file; message names the byte offset."""


class SpecMismatchError(FormatError):
    """A stored artifact was produced for a different network architecture."""
