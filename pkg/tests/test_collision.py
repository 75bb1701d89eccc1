import math

import numpy as np
import pytest
from scipy.optimize import linprog

from roadplan import collision, lpsolve
from roadplan.dynamics import VehicleParams, VehicleState


def test_circle_clear_cases():
    assert collision.circle_clear((0, 0), 1.0, (0, 0), 1.0) == -4.0
    assert collision.circle_clear((0, 0), 1.0, (3, 0), 1.0) == 5.0
    assert abs(collision.circle_clear((0, 0), 1.0, (2, 0), 1.0)) < 1e-12


def test_ellipse_constraint_center_and_boundary():
    e = collision.Ellipse(center=(1.0, 2.0), r_x=3.0, r_y=1.5, psi=0.0)
    assert collision.ellipse_constraint((1.0, 2.0), e) == 0.0
    assert abs(collision.ellipse_constraint((4.0, 2.0), e) - 1.0) < 1e-12
    rotated = collision.Ellipse(center=(1.0, 2.0), r_x=3.0, r_y=1.5,
                                psi=math.pi / 2)
    assert abs(collision.ellipse_constraint((1.0, 5.0), rotated) - 1.0) < 1e-12


def test_ellipse_circular_reduces_to_distance():
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = rng.uniform(-5, 5, 2)
        r = rng.uniform(0.5, 3.0)
        psi = rng.uniform(-3, 3)
        p = rng.uniform(-5, 5, 2)
        e = collision.Ellipse(center=c, r_x=r, r_y=r, psi=psi)
        expected = float((p - c) @ (p - c)) / r ** 2
        assert abs(collision.ellipse_constraint(p, e) - expected) < 1e-12


def test_vehicle_halfspaces_corners():
    params = VehicleParams(wheelbase=4.0, width=2.0)
    rect = collision.vehicle_halfspaces(VehicleState(0, 0, 0), params)
    assert np.allclose(rect.center, [2.0, 0.0])
    # corner (4, 1) sits on two facets
    residual = rect.A_w @ np.array([4.0, 1.0]) - rect.b_w
    assert np.max(residual) < 1e-12
    assert np.sum(np.abs(residual) < 1e-12) == 2
    # a far point violates the first (forward) facet
    assert (rect.A_w @ np.array([100.0, 0.0]) - rect.b_w)[0] > 0


def test_vehicle_halfspaces_point_reflection():
    params = VehicleParams(wheelbase=3.0, width=1.6)
    a = collision.vehicle_halfspaces(VehicleState(1.0, 2.0, 0.4), params)
    b = collision.vehicle_halfspaces(VehicleState(1.0, 2.0, 0.4 + math.pi), params)
    # rotating the pose by pi flips the rectangle through its own center...
    ca = sorted(map(tuple, np.round(a.corners() - a.center, 9)))
    cb = sorted(map(tuple, np.round(-(b.corners() - b.center), 9)))
    assert ca == cb
    # ...but the center moves to the other side of the rear axle
    assert np.allclose(a.center + b.center, 2 * np.array([1.0, 2.0]), atol=1e-12)


def test_separation_value_cases():
    params = VehicleParams(wheelbase=1.0, width=1.0)
    rect = collision.vehicle_halfspaces(VehicleState(-0.5, 0.0, 0.0), params)
    overlapping = collision.ConvexPolyhedron.from_box(-0.5, 0.5, -0.5, 0.5)
    z, w = collision.separation_value(rect, overlapping)
    assert z == 0.0
    disjoint = collision.ConvexPolyhedron.from_box(2.5, 3.5, -0.5, 0.5)
    z2, w2 = collision.separation_value(rect, disjoint)
    assert z2 < 0.0
    assert np.all(w2 >= 0.0) and np.all(w2 <= 1.0)


def _random_pair(rng):
    state = VehicleState(rng.uniform(-3, 3), rng.uniform(-3, 3),
                         rng.uniform(-math.pi, math.pi))
    params = VehicleParams(wheelbase=rng.uniform(1.0, 4.0),
                           width=rng.uniform(0.8, 2.5))
    rect = collision.vehicle_halfspaces(state, params)
    pts = rng.uniform(-4, 4, size=(3, 2))
    part = collision.ConvexPolyhedron.from_points(pts)
    return rect, part


def _primal_feasible(rect, part) -> bool:
    """Oracle: the stacked system has a solution (independent LP code)."""
    A = np.vstack([rect.A_w, part.C])
    b = np.concatenate([rect.b_w, part.d])
    ref = linprog(np.zeros(2), A_ub=A, b_ub=b, bounds=[(None, None)] * 2,
                  method="highs")
    return ref.status == 0


def test_gale_soundness_on_random_rect_triangle_pairs():
    rng = np.random.default_rng(17)
    solver = lpsolve.Solver()
    n_checked = 0
    while n_checked < 500:
        try:
            rect, part = _random_pair(rng)
        except ValueError:
            continue
        zeta, _ = collision.separation_value(rect, part, solver)
        if _primal_feasible(rect, part):
            assert abs(zeta) < 1e-9
        else:
            assert zeta < -1e-9
        n_checked += 1


def test_zeta_rigid_motion_invariance():
    rng = np.random.default_rng(23)
    params = VehicleParams(wheelbase=2.0, width=1.0)
    solver = lpsolve.Solver()
    for _ in range(30):
        state = VehicleState(rng.uniform(-2, 2), rng.uniform(-2, 2),
                             rng.uniform(-3, 3))
        part = collision.ConvexPolyhedron.from_points(rng.uniform(-4, 4, (4, 2)))
        z0, _ = collision.separation_value(
            collision.vehicle_halfspaces(state, params), part, solver)
        angle = rng.uniform(-3, 3)
        shift = rng.uniform(-10, 10, 2)
        R = collision.rotation(angle)
        moved_pos = R @ np.array([state.x, state.y]) + shift
        moved_state = VehicleState(moved_pos[0], moved_pos[1], state.psi + angle)
        moved_part = part.transformed(angle, shift)
        z1, _ = collision.separation_value(
            collision.vehicle_halfspaces(moved_state, params), moved_part, solver)
        assert abs(z0 - z1) < 1e-8


def test_circle_clear_implies_separation():
    rng = np.random.default_rng(31)
    params = VehicleParams(wheelbase=2.0, width=1.2)
    r_vehicle = 0.5 * math.hypot(2.0, 1.2)
    solver = lpsolve.Solver()
    for _ in range(100):
        state = VehicleState(rng.uniform(-5, 5), rng.uniform(-5, 5),
                             rng.uniform(-3, 3))
        rect = collision.vehicle_halfspaces(state, params)
        part = collision.ConvexPolyhedron.from_points(rng.uniform(-6, 6, (4, 2)))
        verts = collision.polyhedron_vertices(part)
        c_obs = np.mean(verts, axis=0)
        r_obs = float(np.max(np.linalg.norm(verts - c_obs, axis=1)))
        if collision.circle_clear(rect.center, r_vehicle, c_obs, r_obs) >= 0:
            zeta, _ = collision.separation_value(rect, part, solver)
            assert zeta < -1e-9


def test_trajectory_clear_empty_obstacles():
    times = np.array([0.0, 1.0])
    states = np.array([[0, 0, 0], [1, 0, 0]], dtype=float)
    rep = collision.trajectory_clear(times, states, VehicleParams(), [], eps=1e-3)
    assert rep.clear and rep.worst_zeta == -math.inf


def test_trajectory_through_obstacle_not_clear():
    times = np.linspace(0, 1, 5)
    states = np.column_stack([np.linspace(-5, 5, 5), np.zeros(5), np.zeros(5)])
    wall = collision.Obstacle(parts=(collision.ConvexPolyhedron.from_box(
        -1, 1, -1, 1),))
    rep = collision.trajectory_clear(times, states, VehicleParams(), [wall])
    assert not rep.clear
    assert rep.worst_zeta == 0.0


def test_moving_obstacle_transform():
    box = collision.ConvexPolyhedron.from_box(-1, 1, -1, 1)
    obs = collision.Obstacle(parts=(box,),
                             motion=lambda t: (0.0, np.array([2.0 * t, 0.0])))
    part_later = obs.parts_at(3.0)[0]
    assert part_later.contains((6.9, 0.0))
    assert not part_later.contains((0.0, 0.0))


def test_point_polyhedron_distance():
    box = collision.ConvexPolyhedron.from_box(0, 2, 0, 2)
    assert collision.point_polyhedron_distance((1, 1), box) == 0.0
    assert abs(collision.point_polyhedron_distance((4, 1), box) - 2.0) < 1e-12
    assert abs(collision.point_polyhedron_distance((3, 3), box) - math.sqrt(2)) < 1e-12


def test_empty_region_rejected():
    with pytest.raises(ValueError):
        collision.ConvexPolyhedron(np.array([[1.0, 0], [-1.0, 0], [0, 1], [0, -1]]),
                                   np.array([1.0, -2.0, 1.0, 1.0]))
