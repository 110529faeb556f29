"""Exception hierarchy shared by every module."""


class FeedbackError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(FeedbackError, ValueError):
    pass


class EmptyBasisError(FeedbackError, ValueError):
    pass


class RankDeficiencyError(FeedbackError, ValueError):
    pass


class DegenerateChannelError(FeedbackError, ValueError):
    """Raised when a channel (or its projection) has zero norm."""


class PathsUnavailableError(FeedbackError, ValueError):
    """Raised for imported samples that carry no path decomposition."""


class DatasetFormatError(FeedbackError, ValueError):
    pass


class TruncationError(DatasetFormatError):
    pass


class NumericFailure(FeedbackError, ArithmeticError):
    pass


class ConfigError(FeedbackError, ValueError):
    pass
