"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
it to the documented process status without a lookup table.
"""

from __future__ import annotations


class TTSobolError(Exception):
    """Base class for all package errors."""

    exit_code = 3

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class ShapeError(TTSobolError, ValueError):
    """Operands have incompatible dimensions or rank chains."""


class DomainError(TTSobolError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class CapacityError(TTSobolError):
    """A configured size cap (dense entries, rank product, 2^N sweep) was hit."""

    exit_code = 5


class NumericalError(TTSobolError):
    """Base for numerically ill-posed results."""

    exit_code = 4


class DegenerateModelError(NumericalError):
    """The model has (numerically) zero variance."""


class NumericalInstabilityError(NumericalError):
    """A quantity that must be nonnegative came out clearly negative."""


class ConstructionError(NumericalError):
    """A surrogate builder could not produce any usable result."""


class DataError(TTSobolError):
    """Malformed input data (sample files, serialized tensors)."""


class FormatError(DataError):
    """Serialized file has the wrong magic, version or structure."""


class ChecksumError(DataError):
    """Serialized payload does not match its stored CRC32."""


class FileAccessError(DataError):
    """A file could not be opened, read or written."""


class UsageError(TTSobolError):
    """Invalid command-line usage."""

    exit_code = 2
