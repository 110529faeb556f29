"""Subspace-projection simulation of limited-feedback MIMO beamforming.

Covers Type-I, Type-II, port-selection and the RSRP-fingerprint-driven
site-specific scheme, plus the end-to-end probing/decoder trainer.
"""

from ssfeedback.errors import (
    ConfigError,
    DatasetFormatError,
    DegenerateChannelError,
    DimensionMismatchError,
    EmptyBasisError,
    FeedbackError,
    NumericFailure,
    PathsUnavailableError,
    RankDeficiencyError,
    TruncationError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DatasetFormatError",
    "DegenerateChannelError",
    "DimensionMismatchError",
    "EmptyBasisError",
    "FeedbackError",
    "NumericFailure",
    "PathsUnavailableError",
    "RankDeficiencyError",
    "TruncationError",
]
