"""Exception hierarchy shared across the package."""


class MVCError(Exception):
    """Base class for every error raised by mvclust."""


class ShapeError(MVCError, ValueError):
    pass


class DomainError(MVCError, ValueError):
    pass


class UsageError(MVCError, ValueError):
    pass


class DataFormatError(MVCError):
    """Malformed dataset or checkpoint file.

    ``offset`` is the byte position where parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingError(MVCError):
    """Raised when every run of a protocol aborted.  ``records`` keeps the
    diagnostic records of the aborted runs."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records or [])


class PropositionViolation(MVCError, AssertionError):
    pass
