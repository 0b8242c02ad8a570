"""Exception types shared across the package."""


class FedsimError(Exception):
    """Base class for all package-specific errors."""


class ZeroVectorError(FedsimError):
    """An operation received an all-zero vector where a direction is required."""


class DimensionMismatchError(FedsimError):
    """Operands have incompatible dimensions."""


class EmptySetError(FedsimError):
    """An operation received an empty collection."""


class DegenerateCentroidError(FedsimError):
    """The centroid of a vector set is the zero vector."""


class ConfigError(FedsimError):
    """Invalid configuration value or unknown configuration key."""


class FormatError(FedsimError):
    """Malformed external file (bad magic, truncation, count mismatch)."""


class NoEligibleExamplesError(FedsimError):
    """No test examples qualify for the requested metric."""
