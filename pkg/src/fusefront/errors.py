"""Exception types raised across the package.

The CLI maps :class:`UsageError` to exit code 1, every other
:class:`FuseFrontError` to exit code 2.
"""


class FuseFrontError(Exception):
    """Base class for all package errors."""


class UsageError(FuseFrontError):
    pass


class InvalidInputError(FuseFrontError, ValueError):
    """Non-finite samples, out-of-range arguments and the like."""


class ShapeError(FuseFrontError, ValueError):
    pass


class ConfigurationError(FuseFrontError, ValueError):
    pass


class AlignmentError(FuseFrontError, ValueError):
    """The two feature streams run on incompatible frame clocks."""


class FeatFormatError(FuseFrontError):
    """Malformed binary container. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class InvalidDataError(FuseFrontError, ValueError):
    pass


class TrainingError(FuseFrontError):
    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch


class UndefinedMetricError(FuseFrontError, ValueError):
    pass


class DomainError(FuseFrontError, ValueError):
    pass


class DegenerateRowError(FuseFrontError, ValueError):
    pass
