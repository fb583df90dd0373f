"""Exception types shared across the package."""


class ClockBPError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(ClockBPError, ValueError):
    """A parameter range, schedule, or experiment config is invalid."""


class TopologyFileError(ClockBPError, ValueError):
    """A topology file failed to parse or violates a structural invariant."""


class DegenerateObservationError(ClockBPError, ValueError):
    """An observation matrix is rank deficient (all timestamp sums identical)."""


class DegenerateEstimateError(ClockBPError, ValueError):
    """A belief cannot be turned into clock parameters (no information, or
    the leading mean component is numerically zero)."""


class IdentifiabilityError(ClockBPError, ValueError):
    """A centralized solve hit a singular normal/information matrix."""
