"""Shortest-path planners: 8-connected geometric grid and a kinematic lattice.

Both planners are solved with the same priority-queue Dijkstra.  The grid
planner treats the vehicle as a disc (half body diagonal) and knows nothing
about heading; the lattice planner expands explicit-Euler images of the car
model under a discretized (v, delta) control set, so every edge respects the
steering bounds by construction.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import geometry
from .collision import (Obstacle, point_polyhedron_distance, polyhedron_vertices,
                        separation_value, vehicle_halfspaces)
from .dynamics import VehicleParams, VehicleState
from .errors import BoundsExceeded, NegativeEdge, NoPath, StartOrGoalBlocked
from .lpsolve import Solver


def dijkstra(neighbors: Callable[[Hashable], Iterable[Tuple[Hashable, float]]],
             source: Hashable,
             targets: Optional[Iterable[Hashable]] = None):
    """Priority-queue Dijkstra over an implicit graph.

    `neighbors(node)` yields (successor, edge_cost) pairs.  Stops early once
    every requested target is settled.  Returns (cost map, predecessor map);
    unreached nodes are simply absent (treat as +inf).
    """
    remaining = set(targets) if targets is not None else None
    dist: Dict[Hashable, float] = {source: 0.0}
    pred: Dict[Hashable, Hashable] = {}
    settled = set()
    heap: List[Tuple[float, Hashable]] = [(0.0, source)]
    while heap:
        d, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if remaining is not None:
            remaining.discard(node)
            if not remaining:
                break
        for succ, cost in neighbors(node):
            if cost < 0:
                raise NegativeEdge(f"edge {node} -> {succ} has cost {cost}")
            nd = d + cost
            if nd < dist.get(succ, math.inf) - 1e-15:
                dist[succ] = nd
                pred[succ] = node
                heapq.heappush(heap, (nd, succ))
    return dist, pred


def _walk_back(pred, source, target):
    path = [target]
    while path[-1] != source:
        path.append(pred[path[-1]])
    path.reverse()
    return path


@dataclass(frozen=True)
class GridConfig:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    n_x: int
    n_y: int

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError("need at least one cell per axis")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError("bounds must be ordered")

    @property
    def h_x(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def h_y(self) -> float:
        return (self.y_max - self.y_min) / self.n_y

    def point(self, i: int, j: int) -> np.ndarray:
        return np.array([self.x_min + i * self.h_x, self.y_min + j * self.h_y])

    def snap(self, p) -> Tuple[int, int]:
        i = int(round((p[0] - self.x_min) / self.h_x))
        j = int(round((p[1] - self.y_min) / self.h_y))
        return (min(max(i, 0), self.n_x), min(max(j, 0), self.n_y))


@dataclass(frozen=True)
class PlanResult:
    waypoints: np.ndarray          # (n, 2) or (n, 3) for the lattice
    cost: float
    expanded: int
    controls: Optional[np.ndarray] = None   # (n-1, 2) lattice controls (v, delta)


def _vehicle_disc_radius(params: VehicleParams) -> float:
    return 0.5 * math.hypot(params.wheelbase, params.width)


def grid_plan(cfg: GridConfig, obstacles: Sequence[Obstacle], start, goal,
              params: Optional[VehicleParams] = None) -> PlanResult:
    """Minimum-cost 8-neighbor path; diagonal steps cost the true diagonal.

    Nodes closer than the vehicle's bounding-disc radius to any obstacle
    part are removed before the search.
    """
    params = params or VehicleParams()
    radius = _vehicle_disc_radius(params)
    parts = [p for obs in obstacles for p in obs.parts_at(0.0)]

    feasible: Dict[Tuple[int, int], bool] = {}

    def ok(node) -> bool:
        if node not in feasible:
            p = cfg.point(*node)
            feasible[node] = all(point_polyhedron_distance(p, part) >= radius
                                 for part in parts)
        return feasible[node]

    start_node = cfg.snap(start)
    goal_node = cfg.snap(goal)
    if not ok(start_node) or not ok(goal_node):
        raise StartOrGoalBlocked("start or goal lies inside an obstacle margin")

    steps = [(di, dj, math.hypot(di * cfg.h_x, dj * cfg.h_y))
             for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    expanded = 0

    def neighbors(node):
        nonlocal expanded
        expanded += 1
        i, j = node
        for di, dj, cost in steps:
            ni, nj = i + di, j + dj
            if 0 <= ni <= cfg.n_x and 0 <= nj <= cfg.n_y and ok((ni, nj)):
                yield (ni, nj), cost

    dist, pred = dijkstra(neighbors, start_node, targets=[goal_node])
    if goal_node not in dist:
        raise NoPath("goal not reachable on the grid")
    nodes = _walk_back(pred, start_node, goal_node)
    pts = np.array([cfg.point(*n) for n in nodes])
    return PlanResult(waypoints=pts, cost=dist[goal_node], expanded=expanded)


@dataclass(frozen=True)
class LatticeConfig:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    psi_min: float = -math.pi
    psi_max: float = math.pi
    cell_xy: float = 0.25            # snapping cell size for node identity
    cell_psi: float = 2 * math.pi / 72
    n_v: int = 2                     # velocity grid v_min..v_max in n_v+1 steps
    n_delta: int = 6
    step: float = 0.25               # Euler step [s]
    edge_cost: str = "time"          # "time" or "euclidean"
    goal_tol: float = 1.0

    def __post_init__(self):
        if self.n_v < 1 or self.n_delta < 1 or self.step <= 0:
            raise ValueError("counts must be >= 1 and step positive")


def _euler_image(q: np.ndarray, v: float, delta: float, h: float, ell: float) -> np.ndarray:
    x, y, psi = q
    return np.array([x + h * v * math.cos(psi),
                     y + h * v * math.sin(psi),
                     psi + h * v / ell * math.tan(delta)])


def lattice_plan(cfg: LatticeConfig, params: VehicleParams,
                 obstacles: Sequence[Obstacle], start, goal) -> PlanResult:
    """Search over explicit-Euler successors of the 3-state car model.

    Node identity comes from snapping to cells of size cell_xy / cell_psi;
    the exact continuous state of the first visitor to a cell is kept, so
    every stored edge reproduces F(q, u) bitwise.
    """
    start = np.asarray(start, dtype=float)
    if not (cfg.x_min <= start[0] <= cfg.x_max and cfg.y_min <= start[1] <= cfg.y_max):
        raise BoundsExceeded("start outside lattice bounds")
    goal = np.asarray(goal, dtype=float)

    controls = [(params.v_min + i * (params.v_max - params.v_min) / cfg.n_v,
                 -params.delta_max + j * 2 * params.delta_max / cfg.n_delta)
                for i in range(cfg.n_v + 1) for j in range(cfg.n_delta + 1)]
    controls = [(v, d) for v, d in controls if v > 0]   # zero speed makes no progress
    # equal-cost ties resolve to the first edge that claims a cell, so order
    # the control sweep by least steering, then most progress
    controls.sort(key=lambda c: (abs(c[1]), -c[0]))

    parts = [p for obs in obstacles for p in obs.parts_at(0.0)]
    lp = Solver()
    clear_cache: Dict[Tuple[int, int, int], bool] = {}
    # bounding-circle prefilter: a clear circle pair implies separation, so
    # the exact LP certificate only runs for nearby parts
    r_vehicle = _vehicle_disc_radius(params)
    part_discs = []
    for part in parts:
        verts = polyhedron_vertices(part)
        c = np.mean(verts, axis=0)
        part_discs.append((c, float(np.max(np.linalg.norm(verts - c, axis=1)))))

    def key(q) -> Tuple[int, int, int]:
        return (int(round(q[0] / cfg.cell_xy)), int(round(q[1] / cfg.cell_xy)),
                int(round(q[2] / cfg.cell_psi)))

    def pose_clear(q) -> bool:
        k = key(q)
        if k not in clear_cache:
            rect = vehicle_halfspaces(VehicleState(q[0], q[1], q[2]), params)
            ok = True
            for part, (c_obs, r_obs) in zip(parts, part_discs):
                gap = rect.center - c_obs
                if gap @ gap >= (r_vehicle + r_obs) ** 2:
                    continue
                if separation_value(rect, part, lp)[0] >= -1e-9:
                    ok = False
                    break
            clear_cache[k] = ok
        return clear_cache[k]

    if not pose_clear(start):
        raise StartOrGoalBlocked("start pose collides")

    # state/edge bookkeeping follows the best-known path into each cell, so
    # the final chain reproduces F(q, u) exactly for the stored controls.
    # costs are lexicographic (edge cost, accumulated |delta|): among
    # equal-cost paths the one with least total steering wins
    start_key = key(start)
    states: Dict[Tuple[int, int, int], np.ndarray] = {start_key: start}
    in_edge: Dict[Tuple, Tuple[float, float]] = {}
    dist: Dict = {start_key: (0.0, 0.0)}
    pred: Dict = {}
    heap = [(0.0, 0.0, start_key)]
    settled = set()
    goal_key = None
    expanded = 0
    while heap:
        d, steer, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        q = states[node]
        if math.hypot(q[0] - goal[0], q[1] - goal[1]) <= cfg.goal_tol:
            goal_key = node
            break
        expanded += 1
        for v, delta in controls:
            q2 = _euler_image(q, v, delta, cfg.step, params.wheelbase)
            if not (cfg.x_min <= q2[0] <= cfg.x_max and cfg.y_min <= q2[1] <= cfg.y_max
                    and cfg.psi_min <= q2[2] <= cfg.psi_max):
                continue
            k2 = key(q2)
            if k2 == node or k2 in settled:
                continue
            if not pose_clear(q2):
                continue
            cost = cfg.step if cfg.edge_cost == "time" else float(
                np.hypot(q2[0] - q[0], q2[1] - q[1]))
            nd, nsteer = d + cost, steer + abs(delta)
            old = dist.get(k2, (math.inf, math.inf))
            if nd < old[0] - 1e-15 or (abs(nd - old[0]) <= 1e-15
                                       and nsteer < old[1] - 1e-15):
                dist[k2] = (nd, nsteer)
                pred[k2] = node
                states[k2] = q2
                in_edge[k2] = (v, delta)
                heapq.heappush(heap, (nd, nsteer, k2))
    if goal_key is None:
        raise NoPath("no lattice path into the goal region")

    keys = _walk_back(pred, start_key, goal_key)
    pts = np.array([states[k] for k in keys])
    ctrl = np.array([in_edge[k] for k in keys[1:]]) if len(keys) > 1 else np.zeros((0, 2))
    return PlanResult(waypoints=pts, cost=dist[goal_key][0], expanded=expanded,
                      controls=ctrl)


def plan_to_track(plan: PlanResult, thin_tol: float = 0.0) -> geometry.CubicSpline:
    """thin -> chord-length parametrize -> natural cubic spline."""
    pts = plan.waypoints[:, :2]
    if thin_tol > 0:
        pts = geometry.thin(pts, thin_tol)
    return geometry.interpolate(pts)
