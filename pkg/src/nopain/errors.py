"""Exception hierarchy shared across the package."""


class NopainError(Exception):
    """Base class for all errors raised by this package."""


class MalformedFile(NopainError):
    """File does not conform to the expected binary layout."""


class NonFiniteData(NopainError):
    """NaN or Inf encountered where finite values are required."""


class DimensionMismatch(NopainError):
    """Shapes or dimensions of two inputs do not agree."""


class IoFailure(NopainError):
    """Underlying read/write failed (permissions, missing path, ...)."""


class InvalidSpec(NopainError):
    """A generator or configuration specification violates its invariants."""


class NotConverged(NopainError):
    """Solver hit its epoch cap with energy still above the threshold.

    Carries the best height vector seen so far plus the statistics and
    report for that run, so callers can persist partial results.
    """

    def __init__(self, message, heights=None, stats=None, report=None):
        super().__init__(message)
        self.heights = heights
        self.stats = stats
        self.report = report


class ProbeExhausted(NopainError):
    """Rejection sampling failed to land a point inside the requested cell."""


class ZeroVector(NopainError):
    """Angle requested against a zero-norm vector."""


class EmptyCloud(NopainError):
    """Point-set metric invoked on an empty cloud."""


class NotConvergedInput(NopainError):
    """Attack invoked with statistics that fail the convergence contract."""


class ConfigError(NopainError):
    """Unknown key or unparseable value in a run configuration."""
