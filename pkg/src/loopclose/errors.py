"""Exception types raised across the package.

File-system failures (missing/unreadable paths) surface as the builtin
OSError family; everything domain-specific derives from LoopCloseError.
"""


class LoopCloseError(Exception):
    """Base class for all errors raised by this package."""


class DecodeError(LoopCloseError):
    """Image file exists but cannot be decoded (corrupt or unsupported)."""


class InvalidSizeError(LoopCloseError, ValueError):
    """A requested raster dimension is zero or negative."""


class InvalidParamsError(LoopCloseError, ValueError):
    """Parameter set violates its documented constraints."""


class ImageTooSmallError(LoopCloseError, ValueError):
    """Image is smaller than the sampling patch."""


class InsufficientDataError(LoopCloseError, ValueError):
    """Too few samples for the requested model size."""


class DegenerateCovarianceError(LoopCloseError):
    """Training covariance has lower rank than the requested output dimension."""

    def __init__(self, achievable_rank: int, requested: int):
        self.achievable_rank = achievable_rank
        self.requested = requested
        super().__init__(
            f"covariance rank {achievable_rank} is below the requested "
            f"{requested} components"
        )


class DimMismatchError(LoopCloseError, ValueError):
    """Vector dimension does not match the model or database dimension."""


class NumericalFailureError(LoopCloseError, ArithmeticError):
    """Optimization produced a non-finite quantity."""


class EmptyFeatureSetError(LoopCloseError, ValueError):
    """Encoding requested for an image with no local features."""


class NonFiniteInputError(LoopCloseError, ValueError):
    """Input vector contains NaN or infinity."""


class EmptyDatabaseError(LoopCloseError, ValueError):
    """Nearest-neighbor query against an empty (or fully excluded) database."""


class FormatError(LoopCloseError):
    """Serialized model/feature file is malformed (magic, version, truncation)."""


class UnknownLayerError(LoopCloseError, KeyError):
    """Layer name is not one of the known network layers."""


class UnknownQueryError(LoopCloseError, ValueError):
    """A match refers to a query id absent from the ground truth."""


class EmptyGroundTruthError(LoopCloseError, ValueError):
    """No query has any true pair; precision-recall is undefined."""


class EmptyCurveError(LoopCloseError, ValueError):
    """Average precision requested for a curve with no points."""


class ConfigError(LoopCloseError):
    """Experiment configuration is missing or inconsistent."""
