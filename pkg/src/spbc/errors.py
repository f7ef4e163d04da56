"""Exception hierarchy shared by every module of the package."""


class SPBCError(Exception):
    """Base class for all package errors."""


class CollisionError(SPBCError):
    """Two bodies came closer than the collision floor."""


class SegmentCollision(CollisionError):
    """Straight-line interpolants of two bodies intersect."""


class StepFailure(SPBCError):
    """Adaptive step size underflowed the configured minimum."""


class NoConvergence(SPBCError):
    """An iterative solver hit its iteration budget."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ShootingDivergence(NoConvergence):
    """Gauss-Newton shooting stalled above tolerance."""


class DegenerateOmega(SPBCError):
    """Angular speed of the homographic family vanishes."""


class ExcludedAngle(SPBCError, ValueError):
    """Rotation angle is one of the excluded values pi/2, pi, 3pi/2."""


class NegativeTime(SPBCError, ValueError):
    pass


class DegenerateRadius(SPBCError):
    """A Jacobi radius is too small for polar coordinates."""


class SingularMatrix(SPBCError):
    pass


class VerificationFailure(SPBCError):
    """A numerically checked orbit relation does not hold."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class DivergenceWarning(RuntimeWarning):
    """Boundary parameters left the configured trust region."""


class ConditioningWarning(RuntimeWarning):
    """Monodromy matrix drifted away from symplecticity."""
