"""Request/response models of the planning service."""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict


class _Schema(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScenarioRef(_Schema):
    """Scenario source: an inline document or a shipped fixture name."""

    scenario: Optional[dict] = None
    fixture: Optional[str] = None
    seed: Optional[int] = None             # overrides the scenario seed


class HealthResponse(_Schema):
    status: str
    version: str


class EchoResponse(_Schema):
    scenario: dict


class KktInfo(_Schema):
    status: str
    iterations: int
    polish_iterations: int
    stationarity: float
    feasibility: float
    complementarity: float


class GridPlanRequest(ScenarioRef):
    pass


class GridPlanResponse(_Schema):
    waypoints: List[Tuple[float, float]]
    cost: float
    expanded: int
    thinned: List[Tuple[float, float]]
    spline_length: float


class LatticePlanRequest(ScenarioRef):
    pass


class LatticePlanResponse(_Schema):
    states: List[Tuple[float, float, float]]
    controls: List[Tuple[float, float]]
    cost: float
    expanded: int
    max_steer: float


class ParkingRequest(_Schema):
    n_nodes: int = 101
    scheme: str = "rk4"


class TrajectoryPayload(_Schema):
    times: List[float]
    states: List[List[float]]
    controls: List[List[float]]


class ParkingResponse(_Schema):
    tf: float
    objective: float
    trajectory: TrajectoryPayload
    kkt: KktInfo
    curb_clear: bool
    worst_zeta: float


class AvoidanceRequest(_Schema):
    n_nodes: int = 51
    scheme: str = "rk4"
    p1: float = 0.0
    p2: float = 0.0


class AvoidanceResponse(_Schema):
    d: float
    tf: float
    objective: float
    accel_lower_bound_fraction: float
    trajectory: TrajectoryPayload
    kkt: KktInfo


class SensitivityRequest(_Schema):
    n_nodes: int = 51
    scheme: str = "rk4"


class TaylorProbe(_Schema):
    p: Tuple[float, float]
    predicted_d: float
    predicted_tf: float


class SensitivityResponse(_Schema):
    d: float
    tf: float
    dtf_dp: Tuple[float, float]
    dd_dp: Tuple[float, float]
    taylor: List[TaylorProbe]


class MpcRequest(ScenarioRef):
    pass


class RoundLogRow(_Schema):
    round: int
    t: float
    vehicle: int
    solve_status: str
    priority_rank: int
    min_ellipse_value: float


class MpcResponse(_Schema):
    times: List[float]
    trajectories: Dict[int, List[List[float]]]
    logs: List[RoundLogRow]
    reached: Dict[int, bool]
    min_pair_clearance: float


class TrackRequest(ScenarioRef):
    offset_initial: Optional[Tuple[float, float]] = None   # replaces track start
    with_noise: bool = False
    duration: Optional[float] = None
    gains: Optional[Tuple[float, float, float, float, float, float]] = None


class TrackResponse(_Schema):
    times: List[float]
    states: List[List[float]]
    ref_positions: List[List[float]]
    errors: List[float]
    max_error: float
    final_error: float
    stable: bool
    eigenvalue_max_real: float
