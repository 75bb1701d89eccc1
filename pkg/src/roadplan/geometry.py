"""Planar cubic splines over chord-length breakpoints, plus waypoint thinning.

Tracks are stored as a pair of natural cubic splines x(s), y(s) where s is
the cumulative chord length of the interpolated waypoints.  Evaluation
outside [0, L] clamps to the nearest endpoint (MPC horizons may overrun the
track end) and flags the clamp on the returned curve.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline as _SciCubic

from .errors import DuplicatePoint


def as_waypoints(points: Iterable[Sequence[float]]) -> np.ndarray:
    """Validate and convert to an (n, 2) float array."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two planar points")
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(gaps == 0.0):
        i = int(np.argmin(gaps))
        raise DuplicatePoint(f"waypoints {i} and {i + 1} coincide")
    return pts


def chord_lengths(points: Iterable[Sequence[float]]) -> np.ndarray:
    """Cumulative Euclidean chord lengths, starting at 0."""
    pts = as_waypoints(points)
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(gaps)])


@dataclass(frozen=True)
class CubicSpline:
    """Arc-length parametrized planar curve gamma(s) = (x(s), y(s))."""

    breakpoints: np.ndarray          # (m+1,) strictly increasing, s_0 = 0
    coeffs_x: np.ndarray             # (4, m) per-interval cubic coefficients
    coeffs_y: np.ndarray
    waypoints: np.ndarray            # (m+1, 2) interpolated points
    _sx: _SciCubic = field(repr=False, compare=False, default=None)
    _sy: _SciCubic = field(repr=False, compare=False, default=None)

    @property
    def length(self) -> float:
        return float(self.breakpoints[-1])

    def _clamp(self, s):
        s = np.asarray(s, dtype=float)
        out_of_range = (s < 0.0) | (s > self.length)
        if np.any(out_of_range):
            warnings.warn("spline evaluated outside [0, L]; clamping",
                          RuntimeWarning, stacklevel=3)
            s = np.clip(s, 0.0, self.length)
        return s

    def eval(self, s):
        s = self._clamp(s)
        return np.stack([self._sx(s), self._sy(s)], axis=-1)

    def eval_d(self, s):
        s = self._clamp(s)
        return np.stack([self._sx(s, 1), self._sy(s, 1)], axis=-1)

    def eval_dd(self, s):
        s = self._clamp(s)
        return np.stack([self._sx(s, 2), self._sy(s, 2)], axis=-1)


def second_derivative_jumps(spline: CubicSpline) -> np.ndarray:
    """Exact second-derivative jumps at interior breakpoints, from the
    stored piecewise coefficients (a zero jump is the C2 property)."""
    h = np.diff(spline.breakpoints)
    jumps = []
    for coeffs in (spline.coeffs_x, spline.coeffs_y):
        left_end = 6.0 * coeffs[0, :-1] * h[:-1] + 2.0 * coeffs[1, :-1]
        right_start = 2.0 * coeffs[1, 1:]
        jumps.append(np.abs(left_end - right_start))
    return np.max(np.array(jumps), axis=0)


def interpolate(points: Iterable[Sequence[float]]) -> CubicSpline:
    """Natural cubic spline through the waypoints (zero end curvature).

    Two points degrade to a single linear segment.
    """
    pts = as_waypoints(points)
    s = chord_lengths(pts)
    sx = _SciCubic(s, pts[:, 0], bc_type="natural")
    sy = _SciCubic(s, pts[:, 1], bc_type="natural")
    return CubicSpline(breakpoints=s, coeffs_x=sx.c, coeffs_y=sy.c,
                       waypoints=pts, _sx=sx, _sy=sy)


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def thin(points: Iterable[Sequence[float]], tolerance: float) -> np.ndarray:
    """Douglas-Peucker thinning with perpendicular-distance tolerance.

    Keeps the first and last point; every removed point lies within
    `tolerance` of the thinned polyline.  tolerance = 0 returns the input.
    """
    pts = as_waypoints(points)
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    if tolerance == 0.0 or len(pts) <= 2:
        return pts

    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        seg = pts[i + 1:j]
        dists = np.array([_point_segment_distance(p, pts[i], pts[j]) for p in seg])
        k = int(np.argmax(dists))
        if dists[k] > tolerance:
            mid = i + 1 + k
            keep[mid] = True
            stack.append((i, mid))
            stack.append((mid, j))
    return pts[keep]


# --- CSV interfaces -----------------------------------------------------------

def read_waypoints_csv(path) -> np.ndarray:
    """Two-column x,y CSV; a non-numeric first row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                if rows:
                    raise
                continue  # header line
    return as_waypoints(rows)


def write_spline_csv(path, spline: CubicSpline, n_samples: int = 200) -> Path:
    """Sample the spline as rows s,x,y,dx,dy."""
    s = np.linspace(0.0, spline.length, n_samples)
    pos = spline.eval(s)
    der = spline.eval_d(s)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["s", "x", "y", "dx", "dy"])
        for i in range(n_samples):
            out.writerow([f"{val:.9g}" for val in
                          (s[i], pos[i, 0], pos[i, 1], der[i, 0], der[i, 1])])
    return path
