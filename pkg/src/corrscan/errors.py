"""Exception hierarchy shared across the package."""


class CorrscanError(Exception):
    """Base class for all package errors."""


class DomainError(CorrscanError):
    """Invalid lattice dimensions or mask."""


class DataError(CorrscanError):
    """Non-finite, mismatched or otherwise unusable raster data."""


class DegenerateInputError(DataError):
    """Input has no usable variation (constant channel, zero-variance region)."""


class RegionError(CorrscanError):
    """Region outside the domain, empty, or not a member of a family."""


class FamilyError(CorrscanError):
    """Region family misconfigured or empty after filtering."""


class FingerprintMismatch(CorrscanError):
    """A calibration was produced for a different family or domain."""
