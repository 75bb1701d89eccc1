"""Exception hierarchy shared by all roadplan modules."""


class RoadplanError(Exception):
    """Base class for all errors raised by this package."""


class MismatchedVariant(RoadplanError):
    """Control input type does not match the selected model variant."""


class SteeringSingularity(RoadplanError):
    """|delta| too close to pi/2; tan(delta) is not meaningful."""


class DuplicatePoint(RoadplanError):
    """Two consecutive waypoints coincide."""


class LpError(RoadplanError):
    """Linear-program solver failure."""


class LpInfeasible(LpError):
    """Equality system has no solution inside the variable box."""


class NoPath(RoadplanError):
    """Goal unreachable in the search graph."""


class StartOrGoalBlocked(RoadplanError):
    """Start or goal snaps to an infeasible node."""


class BoundsExceeded(RoadplanError):
    """State left the configured configuration-space bounds."""


class NegativeEdge(RoadplanError):
    """Dijkstra requires non-negative edge costs."""


class DimensionMismatch(RoadplanError):
    """Inconsistent problem dimensions."""


class SingularKktMatrix(RoadplanError):
    """KKT system is singular; sensitivities are not defined."""


class ActiveSetDegenerate(RoadplanError):
    """Strict complementarity violated; sensitivity theory does not apply."""


class ZeroSpeedSingularity(RoadplanError):
    """Flat inversion requires a nonzero planar speed."""


class MissingPlan(RoadplanError):
    """A required neighbor plan message is not available."""


class ScenarioError(RoadplanError):
    """Scenario file failed validation."""


class IoFailure(RoadplanError):
    """Artifact could not be written."""
