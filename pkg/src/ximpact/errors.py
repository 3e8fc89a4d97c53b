"""Exception taxonomy shared by all ximpact modules.

Every error raised on a user-facing path derives from :class:`XImpactError`
so callers (and the CLI) can distinguish data problems from bugs.  Ingestion
errors carry enough context (file, line) to locate the offending record.
"""
from __future__ import annotations

__all__ = [
    "XImpactError",
    "ConfigError",
    "ParseError",
    "MissingSector",
    "EmptyIntersection",
    "NonPositivePrice",
    "ZeroVariance",
    "InsufficientData",
    "DimensionMismatch",
    "SingularSystem",
    "NonPositiveProfile",
    "SingularB",
    "DegenerateMeans",
    "NotPositiveDefinite",
    "NotSymmetric",
    "NotPSD",
    "InvalidGamma",
    "HorizonTooShort",
    "SubsetTooSmall",
    "NoSectorPairs",
    "MissingArtifact",
]


class XImpactError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(XImpactError):
    """Invalid, conflicting or unparseable run configuration."""


class ParseError(XImpactError):
    """Malformed input record.

    Carries the source path and 1-based line number when known.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + where)


class MissingSector(XImpactError):
    """An asset in the panel has no sector assignment."""


class EmptyIntersection(XImpactError):
    """No timestamp is shared by every asset in the panel."""


class NonPositivePrice(XImpactError):
    """A price entry is zero or negative; log-returns are undefined."""


class ZeroVariance(XImpactError):
    """A column is constant; unit-variance normalization is impossible."""


class InsufficientData(XImpactError):
    """Sample too short for the requested lag range."""


class DimensionMismatch(XImpactError):
    """Inputs disagree on the number of assets or lags."""


class SingularSystem(XImpactError):
    """The normal equations of the kernel fit are singular."""


class NonPositiveProfile(XImpactError):
    """A decay-law fit received non-positive profile values."""


class SingularB(XImpactError):
    """The sign-correlation moment matrix of a factorized fit is singular."""


class DegenerateMeans(XImpactError):
    """Market and idiosyncratic means coincide; the two-parameter fit is undefined."""


class NotPositiveDefinite(XImpactError):
    """A covariance matrix expected to be positive definite is not."""


class NotSymmetric(XImpactError):
    """A matrix expected to be symmetric is not (beyond tolerance)."""


class NotPSD(XImpactError):
    """A correlation/covariance specification is not positive semidefinite."""


class InvalidGamma(XImpactError):
    """Sign-memory exponent outside the long-memory range (0, 1)."""


class HorizonTooShort(XImpactError):
    """Measured sign correlations do not cover the requested model horizon."""


class SubsetTooSmall(XImpactError):
    """A requested bootstrap subset size is too small to estimate anything."""


class NoSectorPairs(XImpactError):
    """No subset contains enough same-sector pairs for the sector statistic."""


class MissingArtifact(XImpactError):
    """A pipeline stage requires an artifact that has not been produced."""
