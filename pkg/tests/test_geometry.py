import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roadplan import geometry
from roadplan.errors import DuplicatePoint


def test_chord_lengths_345():
    assert np.allclose(geometry.chord_lengths([(0, 0), (3, 4)]), [0, 5])


def test_chord_lengths_collinear():
    assert np.allclose(geometry.chord_lengths([(0, 0), (1, 0), (2, 0)]), [0, 1, 2])


def test_chord_lengths_square():
    pts = [(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)]
    assert np.allclose(geometry.chord_lengths(pts), [0, 1, 2, 3, 4])


def test_duplicate_point_rejected():
    with pytest.raises(DuplicatePoint):
        geometry.chord_lengths([(0, 0), (0, 0), (1, 0)])


@given(st.floats(-3, 3), st.floats(-50, 50), st.floats(-50, 50))
@settings(max_examples=30)
def test_chord_lengths_rigid_invariance(angle, dx, dy):
    pts = np.array([(0.0, 0.0), (1.0, 0.5), (2.5, -1.0), (4.0, 2.0)])
    c, s = math.cos(angle), math.sin(angle)
    moved = pts @ np.array([[c, s], [-s, c]]) + np.array([dx, dy])
    assert np.max(np.abs(geometry.chord_lengths(pts)
                         - geometry.chord_lengths(moved))) < 1e-12


def test_interpolation_exact_at_waypoints():
    pts = [(0, 0), (1, 1), (2, 0)]
    sp = geometry.interpolate(pts)
    assert np.allclose(sp.eval(sp.breakpoints[1]), [1, 1], atol=1e-12)
    assert np.allclose(sp.eval(0.0), pts[0])
    assert np.allclose(sp.eval(sp.length), pts[-1])


def test_collinear_spline_zero_curvature():
    pts = [(0, 0), (1, 2), (2, 4), (3, 6)]
    sp = geometry.interpolate(pts)
    s = np.linspace(0, sp.length, 50)
    assert np.max(np.abs(sp.eval_dd(s))) < 1e-10


def test_random_waypoints_residuals_and_tridiagonal_system():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-5, 5, size=(10, 2))
    sp = geometry.interpolate(pts)
    # interpolation residuals at the breakpoints
    res = sp.eval(sp.breakpoints) - pts
    assert np.max(np.abs(res)) < 1e-12
    # independent check: the second derivatives M_i of a natural cubic
    # spline satisfy the standard tridiagonal moment equations
    s = sp.breakpoints
    h = np.diff(s)
    for coord in range(2):
        y = pts[:, coord]
        M = np.array([sp.eval_dd(si)[coord] for si in s])
        assert abs(M[0]) < 1e-9 and abs(M[-1]) < 1e-9
        for i in range(1, len(s) - 1):
            lhs = h[i - 1] * M[i - 1] + 2 * (h[i - 1] + h[i]) * M[i] + h[i] * M[i + 1]
            rhs = 6 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1])
            assert abs(lhs - rhs) < 1e-9


def test_two_points_degrade_to_linear():
    sp = geometry.interpolate([(0, 0), (3, 4)])
    mid = sp.eval(2.5)
    assert np.allclose(mid, [1.5, 2.0], atol=1e-12)


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-5, 5, size=(8, 2))
    sp = geometry.interpolate(pts)
    h = 1e-6
    worst = 0.0
    for s in rng.uniform(h, sp.length - h, size=100):
        fd = (sp.eval(s + h) - sp.eval(s - h)) / (2 * h)
        d = sp.eval_d(s)
        worst = max(worst, float(np.max(np.abs(d - fd))) / (1 + float(np.max(np.abs(d)))))
    assert worst < 1e-6


def test_c2_continuity_at_breakpoints():
    rng = np.random.default_rng(9)
    pts = rng.uniform(-5, 5, size=(12, 2))
    sp = geometry.interpolate(pts)
    scale = 1 + np.max(np.abs(sp.eval_dd(sp.breakpoints)))
    assert np.max(geometry.second_derivative_jumps(sp)) < 1e-9 * scale


def test_out_of_range_clamps_with_warning():
    sp = geometry.interpolate([(0, 0), (1, 0), (2, 0)])
    with pytest.warns(RuntimeWarning):
        val = sp.eval(5.0)
    assert np.allclose(val, [2, 0])


def test_thin_collinear_collapses_to_endpoints():
    pts = [(i, 0.0) for i in range(10)]
    out = geometry.thin(pts, 0.01)
    assert len(out) == 2
    assert np.allclose(out, [pts[0], pts[-1]])


def test_thin_zero_tolerance_keeps_input():
    pts = [(0, 0), (1, 0.5), (2, -0.5), (3, 0)]
    out = geometry.thin(pts, 0.0)
    assert np.array_equal(out, np.asarray(pts, dtype=float))


def test_thin_distance_guarantee_on_staircase():
    # staircase like a grid-planner path
    pts = []
    x = y = 0.0
    for i in range(20):
        pts.append((x, y))
        if i % 2 == 0:
            x += 1.0
        else:
            y += 1.0
    eps = 0.5
    out = geometry.thin(pts, eps)
    assert np.allclose(out[0], pts[0]) and np.allclose(out[-1], pts[-1])
    # every removed point is within eps of the thinned polyline
    for p in map(np.asarray, pts):
        dmin = min(geometry._point_segment_distance(p, out[i], out[i + 1])
                   for i in range(len(out) - 1))
        assert dmin <= eps + 1e-12


def test_thin_never_lengthens():
    rng = np.random.default_rng(4)
    pts = np.cumsum(rng.uniform(-1, 1, size=(30, 2)), axis=0)
    full = np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1))
    out = geometry.thin(pts, 0.3)
    thinned = np.sum(np.linalg.norm(np.diff(out, axis=0), axis=1))
    assert thinned <= full + 1e-12


def test_interpolate_thin_idempotence():
    pts = [(0, 0), (1, 0.4), (2, 1.1), (3.5, 0.2)]
    a = geometry.interpolate(geometry.thin(pts, 0.0))
    b = geometry.interpolate(pts)
    assert np.array_equal(a.breakpoints, b.breakpoints)
    s = np.linspace(0, a.length, 40)
    assert np.allclose(a.eval(s), b.eval(s), atol=1e-14)


def test_csv_round_trip(tmp_path):
    pts = [(0.0, 0.0), (1.5, 2.0), (3.0, -1.0)]
    path = tmp_path / "wp.csv"
    path.write_text("x,y\n" + "\n".join(f"{a},{b}" for a, b in pts))
    loaded = geometry.read_waypoints_csv(path)
    assert np.allclose(loaded, pts)
    sp = geometry.interpolate(loaded)
    out = geometry.write_spline_csv(tmp_path / "spline.csv", sp, n_samples=20)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "s,x,y,dx,dy"
    assert len(lines) == 21
