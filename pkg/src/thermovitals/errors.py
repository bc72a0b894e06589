"""Exception hierarchy shared across the package.

``InputError`` (and subclasses) map to CLI exit code 1; any other
``ThermovitalsError`` or unexpected exception maps to exit code 2.
"""

from __future__ import annotations


class ThermovitalsError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ThermovitalsError):
    """Malformed or inconsistent user-supplied input (files, flags, data)."""


class FormatError(InputError):
    """A file does not conform to its documented on-disk format."""


class TooFewSamplesError(InputError):
    """A signal is shorter than an operation's stated minimum.

    Carries the minimum so callers (and error messages) can name it.
    """

    def __init__(self, message: str, minimum: int | None = None, got: int | None = None):
        super().__init__(message)
        self.minimum = minimum
        self.got = got


class NonFiniteError(InputError):
    """Non-finite value encountered; ``index`` is the first offending sample."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class ZeroVarianceError(InputError):
    """A statistic that requires variance was asked of a constant signal."""
