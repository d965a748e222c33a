"""Exception types shared across the package.

Argument validation failures raise plain :class:`ValueError`; the classes
here cover file- and data-integrity failures that callers may want to
distinguish.
"""


class EvsError(Exception):
    """Base class for all package-specific errors."""


class CorruptFileError(EvsError):
    """A container file's header and payload disagree, or the file is truncated."""


class UnsupportedFormatError(EvsError):
    """The file is not a recognized container, version, kind, or dtype."""


class InvalidMaskError(EvsError):
    """A retention mask violates its invariants (e.g. a cleared frame-0 bit)."""


class InvalidStreamError(EvsError):
    """A token stream violates ordering or position-id invariants."""


class InsufficientDataError(EvsError):
    """Too few data points for the requested computation."""
