"""Collision certificates for a rectangular vehicle against convex obstacles.

Three mechanisms, from cheap to exact:

* bounding-circle margin (`circle_clear`)
* ellipsoidal safety regions (`ellipse_constraint`), used by the fleet MPC
* the exact separation test between the vehicle rectangle and a convex
  polyhedron.  The rectangle R(t) and a part {y : C y <= d} are disjoint
  iff the stacked inequality system is infeasible, which by Gale's lemma
  is certified by a nonnegative multiplier vector.  Normalizing the
  multipliers to the unit box turns the certificate search into a small LP
  whose optimal value zeta is <= 0 always and < 0 exactly when the bodies
  are disjoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import lpsolve
from .dynamics import VehicleParams, VehicleState, center, rotation
from .errors import LpInfeasible

# fixed facet-direction matrix of the body-frame rectangle
RECT_A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


@dataclass(frozen=True)
class ConvexPolyhedron:
    """Planar region {y : C y <= d}."""

    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        if C.shape[1] != 2 or C.shape[0] != d.shape[0]:
            raise ValueError("C must be q x 2 with matching d")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)
        if empty_region(C, d):
            raise ValueError("polyhedron describes an empty region")

    @property
    def q(self) -> int:
        return self.C.shape[0]

    def contains(self, point, tol: float = 1e-9) -> bool:
        return bool(np.all(self.C @ np.asarray(point, dtype=float) <= self.d + tol))

    def transformed(self, angle: float, offset) -> "ConvexPolyhedron":
        """Region after rotating by `angle` and translating by `offset`."""
        R = rotation(angle)
        offset = np.asarray(offset, dtype=float)
        C_new = self.C @ R.T
        return ConvexPolyhedron(C_new, self.d + C_new @ offset)

    @staticmethod
    def from_box(x_min, x_max, y_min, y_max) -> "ConvexPolyhedron":
        C = np.array([[1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0]])
        d = np.array([x_max, -x_min, y_max, -y_min], dtype=float)
        return ConvexPolyhedron(C, d)

    @staticmethod
    def from_points(points) -> "ConvexPolyhedron":
        """Half-space form of the convex hull of the given points."""
        hull = convex_hull(np.asarray(points, dtype=float))
        if len(hull) < 3:
            raise ValueError("need at least three non-collinear points")
        C, d = [], []
        for i in range(len(hull)):
            a, b = hull[i], hull[(i + 1) % len(hull)]
            edge = b - a
            normal = np.array([edge[1], -edge[0]])      # outward for CCW hulls
            normal /= np.linalg.norm(normal)
            C.append(normal)
            d.append(normal @ a)
        return ConvexPolyhedron(np.array(C), np.array(d))


def empty_region(C: np.ndarray, d: np.ndarray, tol: float = 1e-9) -> bool:
    """True iff {y : C y <= d} is empty (Gale certificate over the unit box)."""
    q = C.shape[0]
    if q <= 1:
        return False
    if q == 2:
        # only an antiparallel pair with incompatible offsets can be empty
        n0, n1 = np.linalg.norm(C[0]), np.linalg.norm(C[1])
        if n0 < tol or n1 < tol:
            return False
        cr = C[0, 0] * C[1, 1] - C[0, 1] * C[1, 0]
        if abs(cr) > tol or C[0] @ C[1] >= 0:
            return False
        return d[0] / n0 + d[1] / n1 < -tol
    lp = lpsolve.BoxedLp(c=d, E=C.T, rhs=np.zeros(2),
                         lower=np.zeros(q), upper=np.ones(q))
    res = lpsolve.solve(lp)
    return res.status is lpsolve.LpStatus.OPTIMAL and res.value < -tol


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns CCW hull vertices."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polyhedron_vertices(part: ConvexPolyhedron, tol: float = 1e-8) -> np.ndarray:
    """Vertices of a bounded polyhedron via pairwise facet intersection."""
    verts = []
    q = part.q
    for i in range(q):
        for j in range(i + 1, q):
            M = np.array([part.C[i], part.C[j]])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            p = np.linalg.solve(M, np.array([part.d[i], part.d[j]]))
            if np.all(part.C @ p <= part.d + tol):
                verts.append(p)
    if not verts:
        return np.zeros((0, 2))
    return convex_hull(np.array(verts))


def point_polyhedron_distance(point, part: ConvexPolyhedron) -> float:
    """Euclidean distance from a point to the region (0 if inside)."""
    p = np.asarray(point, dtype=float)
    if part.contains(p):
        return 0.0
    verts = polyhedron_vertices(part)
    if len(verts) == 0:
        return math.inf
    if len(verts) == 1:
        return float(np.linalg.norm(p - verts[0]))
    best = math.inf
    for i in range(len(verts)):
        a = verts[i]
        b = verts[(i + 1) % len(verts)]
        ab = b - a
        t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(p - (a + t * ab))))
    return best


@dataclass(frozen=True)
class Obstacle:
    """Union of convex parts; `motion` maps time to a rigid (angle, offset)."""

    parts: tuple
    motion: Optional[Callable[[float], tuple]] = None

    def __post_init__(self):
        if len(self.parts) == 0:
            raise ValueError("an obstacle needs at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    def parts_at(self, t: float) -> Sequence[ConvexPolyhedron]:
        if self.motion is None:
            return self.parts
        angle, offset = self.motion(t)
        return tuple(p.transformed(angle, offset) for p in self.parts)


@dataclass(frozen=True)
class VehicleRect:
    """Vehicle body rectangle in half-space form A_w z <= b_w (world frame)."""

    A_w: np.ndarray
    b_w: np.ndarray
    center: np.ndarray
    psi: float
    length: float
    width: float

    def corners(self) -> np.ndarray:
        R = rotation(self.psi)
        half = np.array([[self.length / 2, self.width / 2],
                         [-self.length / 2, self.width / 2],
                         [-self.length / 2, -self.width / 2],
                         [self.length / 2, -self.width / 2]])
        return self.center + half @ R.T


def vehicle_halfspaces(state: VehicleState, params: VehicleParams) -> VehicleRect:
    """Rectangle of length `wheelbase` and width `width` around the body center.

    World form: A S(psi)^T z <= b + A S(psi)^T r_c.
    """
    ell, w = params.wheelbase, params.width
    b = np.array([ell / 2, ell / 2, w / 2, w / 2])
    S = rotation(state.psi)
    r_c = center(state, params)
    A_w = RECT_A @ S.T
    b_w = b + A_w @ r_c
    return VehicleRect(A_w=A_w, b_w=b_w, center=r_c, psi=state.psi,
                       length=ell, width=w)


def circle_clear(center_a, r_a: float, center_b, r_b: float) -> float:
    """Squared-distance margin ||a-b||^2 - (r_a+r_b)^2; >= 0 means clear."""
    if r_a <= 0 or r_b <= 0:
        raise ValueError("radii must be positive")
    diff = np.asarray(center_a, dtype=float) - np.asarray(center_b, dtype=float)
    return float(diff @ diff - (r_a + r_b) ** 2)


@dataclass(frozen=True)
class Ellipse:
    center: np.ndarray
    r_x: float
    r_y: float
    psi: float = 0.0

    def __post_init__(self):
        if self.r_x <= 0 or self.r_y <= 0:
            raise ValueError("half radii must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def quad_matrix(self) -> np.ndarray:
        S = rotation(self.psi)
        return S @ np.diag([1.0 / self.r_x ** 2, 1.0 / self.r_y ** 2]) @ S.T


def ellipse_constraint(point, e: Ellipse) -> float:
    """(p-c)^T Q (p-c); values >= 1 are outside the safety ellipse."""
    diff = np.asarray(point, dtype=float) - e.center
    return float(diff @ e.quad_matrix() @ diff)


def separation_value(rect: VehicleRect, part: ConvexPolyhedron,
                     solver: Optional[lpsolve.Solver] = None):
    """Optimal value zeta of the Gale-certificate LP, with its multiplier.

    zeta <= 0 always (w = 0 is feasible); zeta < 0 iff rectangle and part
    are disjoint.
    """
    solver = solver or lpsolve.Solver()
    n = 4 + part.q
    cost = np.concatenate([rect.b_w, part.d])
    E = np.vstack([rect.A_w, part.C]).T          # 2 x n
    lp = lpsolve.BoxedLp(c=cost, E=E, rhs=np.zeros(2),
                         lower=np.zeros(n), upper=np.ones(n))
    res = solver.solve(lp)
    if res.status is not lpsolve.LpStatus.OPTIMAL:
        raise LpInfeasible("certificate LP must be feasible (w = 0)")
    return float(res.value), res.w


def _interp_state(times, states, t):
    i = int(np.searchsorted(times, t, side="right")) - 1
    i = max(0, min(i, len(times) - 2))
    span = times[i + 1] - times[i]
    lam = 0.0 if span == 0 else (t - times[i]) / span
    return (1 - lam) * states[i] + lam * states[i + 1]


@dataclass(frozen=True)
class ClearanceReport:
    clear: bool
    worst_zeta: float
    worst_time: float
    worst_obstacle: int
    worst_part: int


def trajectory_clear(times, states, params: VehicleParams,
                     obstacles: Sequence[Obstacle], eps: float = 1e-3,
                     refine: int = 1) -> ClearanceReport:
    """Certify max zeta <= -eps over the knot grid plus `refine` midpoints.

    `states` rows are (x, y, psi, ...); extra state columns are ignored.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    if len(obstacles) == 0:
        return ClearanceReport(True, -math.inf, math.nan, -1, -1)

    samples = list(times)
    for level in range(refine):
        fractions = (np.arange(2 ** level) + 0.5) / 2 ** level
        for i in range(len(times) - 1):
            for f in fractions:
                samples.append(times[i] + f * (times[i + 1] - times[i]))
    samples = np.unique(np.asarray(samples))

    solver = lpsolve.Solver()
    worst = (-math.inf, math.nan, -1, -1)
    for t in samples:
        z = _interp_state(times, states, t)
        pose = z[:5] if z.shape[0] >= 5 else z[:3]
        rect = vehicle_halfspaces(VehicleState.from_array(pose), params)
        for i, obs in enumerate(obstacles):
            for j, part in enumerate(obs.parts_at(t)):
                zeta, _ = separation_value(rect, part, solver)
                if zeta > worst[0]:
                    worst = (zeta, float(t), i, j)
    return ClearanceReport(worst[0] <= -eps, worst[0], worst[1], worst[2], worst[3])
