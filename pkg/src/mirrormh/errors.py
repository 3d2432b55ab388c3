"""Exception types shared across the package."""


class MirrorMHError(Exception):
    """Base class for all package errors."""


class NotSymmetric(MirrorMHError):
    """Matrix is asymmetric beyond tolerance."""


class NotPositiveDefinite(MirrorMHError):
    """Matrix has a non-positive pivot; carries the failing pivot index."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix not positive definite (pivot {pivot})")


class SingularTriangular(MirrorMHError):
    """Triangular system has a zero on the diagonal."""


class UnknownTargetId(MirrorMHError):
    """Requested 1-D target id is not one of 1..5."""


class DimensionMismatch(MirrorMHError):
    """Inputs have inconsistent dimensions."""


class MissingPreconditioner(MirrorMHError):
    """Kernel requires moment estimates that were not supplied."""


class NonFiniteGradient(MirrorMHError):
    """Gradient evaluated to a non-finite value."""


class DegenerateSeries(MirrorMHError):
    """Series has zero variance; diagnostics are undefined."""


class NonPositiveEpsilon(MirrorMHError):
    """Scale parameter must be strictly positive."""


class SingularCovariance(MirrorMHError):
    """Sample covariance is singular even after regularization."""


class TuningFailed(MirrorMHError):
    """Scale tuning did not reach the target acceptance probability."""


class PatternViolation(MirrorMHError):
    """Sparsity-constrained factor lost a positive diagonal."""


class SchemaError(MirrorMHError):
    """Input table is missing a required column."""


class BadSubjectGrouping(MirrorMHError):
    """Subject identifiers are missing or unusable for grouping."""


class ConfigError(MirrorMHError):
    """Experiment configuration is invalid."""


class DataError(MirrorMHError):
    """Required dataset is missing or malformed."""
