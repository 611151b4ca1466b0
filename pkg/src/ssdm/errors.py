"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericalError`` -> 3.
"""


class SSDMError(Exception):
    """Base class for all errors raised by :mod:`ssdm`."""


class DataError(SSDMError, ValueError):
    """Malformed input: missing columns, bad shapes, non-finite cells."""


class NumericalError(SSDMError, ArithmeticError):
    """A computation could not be carried out reliably."""


class BandwidthTooSmall(NumericalError):
    """Local design matrix is (near) singular at some target location.

    Attributes
    ----------
    index : int or None
        Row index of the offending target, when known.
    location : tuple of float
        The target location ``(u, v)``.
    min_h : float
        Smallest bandwidth admitting enough points inside the kernel window
        at that target.
    """

    def __init__(self, message, index=None, location=None, min_h=None):
        super().__init__(message)
        self.index = index
        self.location = location
        self.min_h = min_h


class FormatVersionError(DataError):
    """A serialized artifact has an unsupported ``format_version``."""
