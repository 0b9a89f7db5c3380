"""Exception types shared across the package."""


class MwldError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(MwldError):
    """Vector length does not match the number of queues."""


class UnsupportedRegion(MwldError):
    """Operation is only defined for a different region kind."""


class DomainError(MwldError):
    """Argument outside the mathematical domain of the operation."""


class InitError(MwldError):
    """Infeasible initial workload for the requested policy."""


class NoSettlingTime(MwldError):
    """No slot within the horizon at which the tail workload is inside the region."""


class BracketError(MwldError):
    """Optimization bracket does not contain the maximizer."""


class UpperBoundUndefined(MwldError):
    """The closed-form upper bound requires b outside the unit box."""


class ResourceError(MwldError):
    """Enumeration or grid budget exceeded."""

    def __init__(self, message, attempted_size=None):
        super().__init__(message)
        self.attempted_size = attempted_size


class ConfigError(MwldError):
    """Invalid or unparseable run configuration."""
