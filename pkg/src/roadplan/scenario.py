"""Declarative scenario files: schema, validation, and converters.

One YAML document describes a complete experiment: vehicles, road,
obstacles, planner/ocp/mpc/tracking settings, outputs and the seed.  All
quantities are SI (meters, seconds, radians).  Unknown keys are rejected so
typos fail loudly at load time.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import collision, fleet, geometry, tracking
from .dynamics import VehicleParams, VehicleState
from .errors import ScenarioError

FIXTURE_DIR = Path(__file__).parent / "fixtures"


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class VehicleParamsSpec(_Model):
    wheelbase: float = 4.0
    width: float = 2.0
    v_min: float = 1.0
    v_max: float = 10.0
    delta_max: float = math.pi / 6
    a_min: float = -10.0
    a_max: float = 1.5
    w_max: float = 0.5
    v_delay: float = 0.5

    def build(self) -> VehicleParams:
        return VehicleParams(**self.model_dump())


class VehicleSpec(_Model):
    id: int
    initial: List[float]                 # (x, y, psi[, v[, delta]])
    target: Optional[Tuple[float, float]] = None
    params: VehicleParamsSpec = Field(default_factory=VehicleParamsSpec)
    r_x: float = 3.5
    r_y: float = 2.5
    networked: bool = True

    @model_validator(mode="after")
    def _check_initial(self):
        if not 3 <= len(self.initial) <= 5:
            raise ValueError("initial state needs 3 to 5 components")
        return self

    def build(self) -> fleet.FleetVehicle:
        z = list(self.initial) + [0.0] * (5 - len(self.initial))
        return fleet.FleetVehicle(
            vid=self.id, initial=VehicleState(*z),
            target=tuple(self.target) if self.target else (z[0], z[1]),
            params=self.params.build(), r_x=self.r_x, r_y=self.r_y,
            networked=self.networked)


class PolyhedronSpec(_Model):
    """Either a half-space list [[nx, ny, offset], ...] or a vertex hull."""

    halfspaces: Optional[List[Tuple[float, float, float]]] = None
    vertices: Optional[List[Tuple[float, float]]] = None
    box: Optional[Tuple[float, float, float, float]] = None   # x0, x1, y0, y1

    @model_validator(mode="after")
    def _exactly_one(self):
        given = sum(v is not None for v in (self.halfspaces, self.vertices, self.box))
        if given != 1:
            raise ValueError("give exactly one of halfspaces, vertices, box")
        return self

    def build(self) -> collision.ConvexPolyhedron:
        if self.box is not None:
            return collision.ConvexPolyhedron.from_box(*self.box)
        if self.vertices is not None:
            return collision.ConvexPolyhedron.from_points(self.vertices)
        rows = np.asarray(self.halfspaces, dtype=float)
        return collision.ConvexPolyhedron(rows[:, :2], rows[:, 2])


class EllipseSpec(_Model):
    center: Tuple[float, float]
    r_x: float
    r_y: float
    psi: float = 0.0

    def build(self) -> collision.Ellipse:
        return collision.Ellipse(center=np.asarray(self.center), r_x=self.r_x,
                                 r_y=self.r_y, psi=self.psi)


class MotionSpec(_Model):
    """Rigid linear drift: offset(t) = velocity * t, rotation(t) = omega * t."""

    velocity: Tuple[float, float] = (0.0, 0.0)
    omega: float = 0.0

    def build(self):
        vx, vy = self.velocity
        om = self.omega

        def motion(t: float):
            return om * t, np.array([vx * t, vy * t])

        return motion


class ObstacleSpec(_Model):
    polyhedra: List[PolyhedronSpec] = Field(default_factory=list)
    motion: Optional[MotionSpec] = None

    def build(self) -> collision.Obstacle:
        parts = tuple(p.build() for p in self.polyhedra)
        return collision.Obstacle(parts=parts,
                                  motion=self.motion.build() if self.motion else None)


class GridSpec(_Model):
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    n_x: int = 60
    n_y: int = 30


class LatticeSpec(_Model):
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    cell_xy: float = 0.25
    cell_psi: float = 2 * math.pi / 72
    n_v: int = 2
    n_delta: int = 6
    step: float = 0.25
    goal_tol: float = 1.0


class PlannerSpec(_Model):
    grid: Optional[GridSpec] = None
    lattice: Optional[LatticeSpec] = None
    start: Optional[Tuple[float, float, float]] = None    # psi used by lattice
    goal: Optional[Tuple[float, float]] = None
    thin_tolerance: float = 0.5


class OcpSpec(_Model):
    n_nodes: int = 101
    scheme: Literal["rk4", "euler"] = "rk4"
    p1: float = 0.0
    p2: float = 0.0


class MpcSpec(_Model):
    horizon: float = 2.0
    control_interval: float = 0.1
    comm_radius: float = 30.0
    weights: Tuple[float, float, float] = (1.0, 1.0, 10.0)
    rules: Tuple[str, ...] = fleet.DEFAULT_RULES
    n_nodes: int = 21
    goal_tol: float = 0.5
    time_limit: float = 60.0
    safety_ellipses: List[EllipseSpec] = Field(default_factory=list)
    road: Optional[PolyhedronSpec] = None


class NoiseSpec_(_Model):
    position: Tuple[float, float] = (0.0, 0.0)
    velocity: Tuple[float, float] = (0.0, 0.0)


class TrackingSpec(_Model):
    waypoints: List[Tuple[float, float]] = Field(default_factory=list)
    v_ref: float = 11.5
    wheelbase: float = 2.8
    gains: Tuple[float, float, float, float, float, float] = (1, 1, 2, 2, 2, 2)
    rate: float = 20.0
    duration: Optional[float] = None
    initial: Optional[Tuple[float, float, float]] = None
    noise: Optional[NoiseSpec_] = None
    velocity_estimate: Literal["direct", "finite_difference"] = "direct"


class Scenario(_Model):
    name: str = "unnamed"
    seed: int = 0
    vehicles: List[VehicleSpec] = Field(default_factory=list)
    obstacles: List[ObstacleSpec] = Field(default_factory=list)
    planner: Optional[PlannerSpec] = None
    ocp: OcpSpec = Field(default_factory=OcpSpec)
    mpc: MpcSpec = Field(default_factory=MpcSpec)
    tracking: Optional[TrackingSpec] = None
    outputs: Optional[str] = None          # directory for emitted artifacts

    # -- converters ------------------------------------------------------------

    def build_obstacles(self) -> List[collision.Obstacle]:
        return [o.build() for o in self.obstacles]

    def build_fleet(self) -> fleet.FleetScenario:
        if not self.vehicles:
            raise ScenarioError("scenario has no vehicles")
        return fleet.FleetScenario(
            vehicles=[v.build() for v in self.vehicles],
            road=self.mpc.road.build() if self.mpc.road else None,
            obstacles=tuple(e.build() for e in self.mpc.safety_ellipses),
            horizon=self.mpc.horizon,
            control_interval=self.mpc.control_interval,
            comm_radius=self.mpc.comm_radius,
            alpha=self.mpc.weights,
            rules=tuple(self.mpc.rules),
            n_nodes=self.mpc.n_nodes,
            goal_tol=self.mpc.goal_tol,
            time_limit=self.mpc.time_limit)

    def build_track(self) -> tracking.ReferenceTrack:
        if self.tracking is None or len(self.tracking.waypoints) < 2:
            raise ScenarioError("scenario has no tracking waypoints")
        spline = geometry.interpolate(self.tracking.waypoints)
        return tracking.ReferenceTrack(spline, self.tracking.v_ref)


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid YAML: {exc}") from exc
    return parse_scenario(raw)


def parse_scenario(raw: dict) -> Scenario:
    try:
        return Scenario.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise ScenarioError(f"{loc}: {first['msg']}") from exc


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.model_dump(mode="json"), sort_keys=False)


def fixture_path(name: str) -> Path:
    p = FIXTURE_DIR / f"{name}.yaml"
    if not p.exists():
        raise ScenarioError(f"unknown fixture {name!r}; available: "
                            + ", ".join(sorted(q.stem for q in FIXTURE_DIR.glob('*.yaml'))))
    return p


def load_fixture(name: str) -> Scenario:
    return load_scenario(fixture_path(name))
