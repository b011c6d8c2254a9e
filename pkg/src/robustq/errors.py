"""Exception hierarchy shared by all robustq modules."""


class RobustQError(Exception):
    """Base class for library errors."""


class DimensionError(RobustQError, ValueError):
    """Vector or bitstring length does not match the problem."""


class SizeCapError(RobustQError):
    """Problem exceeds an enumeration or simulation size cap."""


class InfeasibleError(RobustQError):
    """No assignment satisfies the feasibility predicate."""


class EmptyHarvestError(InfeasibleError):
    """Every sampled candidate was filtered out as infeasible.

    The partially built report is attached so callers can still export it.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnsupportedShapeError(RobustQError, ValueError):
    """Operation is only defined for a specific data shape."""
