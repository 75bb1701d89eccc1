"""Flatness-based tracking of a reference curve with the kinematic car.

The rear-axle position is a flat output of the 3-state model: any smooth
planar curve with nonzero speed determines (v, delta) through its first two
derivatives.  `flat_controls` is that inversion, `feedback` stabilizes it
with position/velocity error terms, and `closed_loop` simulates the sampled
loop with optional uniform measurement noise.  `linearized_matrix` gives the
exact Jacobian of the closed-loop right-hand side on the reference; its
characteristic polynomial factors as (lambda^2 + k3 lambda + k4)(lambda + k1)
for constant-speed references under the gain symmetry k1=k2, k3=k5, k4=k6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ZeroSpeedSingularity
from .geometry import CubicSpline

V_FLOOR = 0.1                    # [m/s] flat inversion breaks down near v = 0
V_PROJECTION = (0.0, 50.0)       # commanded speed is projected here
DELTA_PROJECTION = (-math.pi / 6, math.pi / 6)


@dataclass(frozen=True)
class Gains:
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float

    def __post_init__(self):
        if any(not np.isfinite(k) for k in self.as_tuple()):
            raise ValueError("gains must be finite")

    def as_tuple(self):
        return (self.k1, self.k2, self.k3, self.k4, self.k5, self.k6)

    @property
    def symmetric(self) -> bool:
        return self.k1 == self.k2 and self.k3 == self.k5 and self.k4 == self.k6


REFERENCE_GAINS = Gains(1.0, 1.0, 2.0, 2.0, 2.0, 2.0)


@dataclass(frozen=True)
class NoiseSpec:
    position: tuple = (0.0, 0.0)        # uniform interval [lo, hi) [m]
    velocity: tuple = (0.0, 0.0)        # uniform interval [m/s]
    seed: int = 0


class ReferenceTrack:
    """Time-parametrized reference built from an arc-length spline.

    A constant speed profile v_ref maps time to arc length (s = v_ref * t);
    evaluation past the track end clamps, freezing the endpoint.
    """

    def __init__(self, spline: CubicSpline, v_ref: float):
        if v_ref <= V_FLOOR:
            raise ZeroSpeedSingularity(f"reference speed {v_ref} below floor")
        self.spline = spline
        self.v_ref = v_ref
        self.duration = spline.length / v_ref

    def at(self, t: float):
        """Reference position, velocity, acceleration at time t."""
        s = np.clip(t * self.v_ref, 0.0, self.spline.length)
        pos = self.spline.eval(s)
        vel = self.spline.eval_d(s) * self.v_ref
        acc = self.spline.eval_dd(s) * self.v_ref ** 2
        return pos, vel, acc

    def start_state(self) -> np.ndarray:
        pos, vel, _ = self.at(0.0)
        return np.array([pos[0], pos[1], math.atan2(vel[1], vel[0])])


def flat_controls(d1, d2, ell: float, v_floor: float = V_FLOOR):
    """Invert the car model on one point of a curve: first/second derivative
    in, (v, delta) out."""
    y1p, y2p = d1
    y1pp, y2pp = d2
    v_sq = y1p ** 2 + y2p ** 2
    if v_sq <= v_floor ** 2:
        raise ZeroSpeedSingularity("flat inversion needs nonzero speed")
    v = math.sqrt(v_sq)
    delta = math.atan(ell * (y2pp * y1p - y1pp * y2p) / v_sq ** 1.5)
    return v, delta


def feedback(y, y_dot, ref_pos, ref_vel, ref_acc, gains: Gains, ell: float,
             v_floor: float = V_FLOOR):
    """Stabilizing feedback (K_v, K_delta), projected onto the admissible set."""
    k1, k2, k3, k4, k5, k6 = gains.as_tuple()
    e1, e2 = y[0] - ref_pos[0], y[1] - ref_pos[1]
    kv = math.hypot(ref_vel[0] - k1 * e1, ref_vel[1] - k2 * e2)

    y1p, y2p = y_dot
    v_sq = y1p ** 2 + y2p ** 2
    if v_sq <= v_floor ** 2:
        raise ZeroSpeedSingularity("measured speed below floor")
    num = ((ref_acc[1] - k5 * (y2p - ref_vel[1]) - k6 * e2) * y1p
           - (ref_acc[0] - k3 * (y1p - ref_vel[0]) - k4 * e1) * y2p)
    kd = math.atan(ell * num / v_sq ** 1.5)

    kv = min(max(kv, V_PROJECTION[0]), V_PROJECTION[1])
    kd = min(max(kd, DELTA_PROJECTION[0]), DELTA_PROJECTION[1])
    return kv, kd


def _kinematic_step(state, v, delta, ell, dt):
    """One RK4 step of the 3-state model under constant (v, delta)."""

    def rhs(z):
        return np.array([v * math.cos(z[2]), v * math.sin(z[2]),
                         v / ell * math.tan(delta)])

    k1 = rhs(state)
    k2 = rhs(state + 0.5 * dt * k1)
    k3 = rhs(state + 0.5 * dt * k2)
    k4 = rhs(state + dt * k3)
    return state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class TrackingRun:
    times: np.ndarray
    states: np.ndarray          # (n, 3)
    ref_positions: np.ndarray   # (n, 2)
    errors: np.ndarray          # (n,) true position error
    commands: np.ndarray        # (n, 2) applied (v, delta)


def closed_loop(track: ReferenceTrack, initial_state, gains: Gains, ell: float,
                noise: Optional[NoiseSpec] = None, rate: float = 20.0,
                duration: Optional[float] = None,
                velocity_estimate: str = "direct") -> TrackingRun:
    """Sample-and-hold simulation of the feedback loop at `rate` Hz.

    velocity_estimate: "direct" perturbs the true velocity with the noise
    interval; "finite_difference" differences the (noisy) position
    measurements instead, as a receiver without a velocity sensor would.
    """
    if duration is None:
        duration = track.duration
    if duration <= 0:
        raise ValueError("duration must be positive")
    dt = 1.0 / rate
    n_steps = int(round(duration * rate))
    rng = np.random.default_rng(noise.seed) if noise else None

    state = np.asarray(initial_state, dtype=float).copy()
    times = np.zeros(n_steps + 1)
    states = np.zeros((n_steps + 1, 3))
    refs = np.zeros((n_steps + 1, 2))
    errors = np.zeros(n_steps + 1)
    commands = np.zeros((n_steps + 1, 2))

    def draw(interval):
        lo, hi = interval
        if rng is None or (lo == 0.0 and hi == 0.0):
            return np.zeros(2)
        return rng.uniform(lo, hi, size=2)

    prev_meas = None
    v_cmd, d_cmd = track.v_ref, 0.0
    for i in range(n_steps + 1):
        t = i * dt
        pos_d, vel_d, acc_d = track.at(t)
        pos_true = state[:2]
        pos_meas = pos_true + (draw(noise.position) if noise else 0.0)

        psi = state[2]
        vel_true = np.array([v_cmd * math.cos(psi), v_cmd * math.sin(psi)])
        if velocity_estimate == "finite_difference" and prev_meas is not None:
            vel_meas = (pos_meas - prev_meas) / dt
        else:
            vel_meas = vel_true + (draw(noise.velocity) if noise else 0.0)
        prev_meas = pos_meas.copy()

        v_cmd, d_cmd = feedback(pos_meas, vel_meas, pos_d, vel_d, acc_d, gains, ell)

        times[i] = t
        states[i] = state
        refs[i] = pos_d
        errors[i] = float(np.linalg.norm(pos_true - pos_d))
        commands[i] = (v_cmd, d_cmd)
        if i < n_steps:
            state = _kinematic_step(state, v_cmd, d_cmd, ell, dt)
    return TrackingRun(times, states, refs, errors, commands)


def linearized_matrix(ref_vel, ref_acc, gains: Gains, ell: float = 1.0,
                      v_floor: float = V_FLOOR) -> np.ndarray:
    """Jacobian of the closed-loop right-hand side at a reference point.

    Needs the gain symmetry k1=k2, k3=k5, k4=k6.  ell cancels out of the
    linearization (tan and arctan compose away), but it is kept in the
    signature for symmetry with the nonlinear loop.
    """
    if not gains.symmetric:
        raise ValueError("linearization assumes k1=k2, k3=k5, k4=k6")
    k1, k3, k4 = gains.k1, gains.k3, gains.k4
    xd1, yd1 = ref_vel
    xd2, yd2 = ref_acc
    vd = math.hypot(xd1, yd1)
    if vd <= v_floor:
        raise ZeroSpeedSingularity("reference speed below floor")

    c1, s1 = xd1 / vd, yd1 / vd
    dKv = np.array([-k1 * xd1 / vd, -k1 * yd1 / vd, 0.0])

    A = np.zeros((3, 3))
    A[0] = c1 * dKv
    A[0, 2] = -yd1
    A[1] = s1 * dKv
    A[1, 2] = xd1

    # third row: F3 = K_v * H with H = (P x' - Q y') / ||(x', y')||^3,
    # x', y' the closed-loop velocities (rows 0 and 1 above)
    kappa_num = yd2 * xd1 - xd2 * yd1
    H0 = kappa_num / vd ** 3
    dH_dxp = (yd2 + k3 * yd1) / vd ** 3 - 3 * kappa_num * xd1 / vd ** 5
    dH_dyp = (-k3 * xd1 - xd2) / vd ** 3 - 3 * kappa_num * yd1 / vd ** 5
    dH_direct = np.array([k4 * yd1 / vd ** 3, -k4 * xd1 / vd ** 3, 0.0])
    for j in range(3):
        A[2, j] = dKv[j] * H0 + vd * (dH_dxp * A[0, j] + dH_dyp * A[1, j]
                                      + dH_direct[j])
    return A


def closed_loop_rhs(state, t, track: ReferenceTrack, gains: Gains, ell: float):
    """Continuous closed-loop vector field (no sampling, no projection);
    the finite-difference oracle for `linearized_matrix`."""
    k1, k2, k3, k4, k5, k6 = gains.as_tuple()
    pos_d, vel_d, acc_d = track.at(t)
    x, y, psi = state
    e1, e2 = x - pos_d[0], y - pos_d[1]
    kv = math.hypot(vel_d[0] - k1 * e1, vel_d[1] - k2 * e2)
    xp, yp = kv * math.cos(psi), kv * math.sin(psi)
    v_sq = xp ** 2 + yp ** 2
    num = ((acc_d[1] - k5 * (yp - vel_d[1]) - k6 * e2) * xp
           - (acc_d[0] - k3 * (xp - vel_d[0]) - k4 * e1) * yp)
    kd = math.atan(ell * num / v_sq ** 1.5)
    return np.array([xp, yp, kv / ell * math.tan(kd)])


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    applicable: bool
    roots: tuple


def stability_check(gains: Gains) -> StabilityReport:
    """Hurwitz test of (lambda^2 + k3 lambda + k4)(lambda + k1)."""
    if not gains.symmetric:
        return StabilityReport(stable=False, applicable=False, roots=())
    k1, k3, k4 = gains.k1, gains.k3, gains.k4
    quad = np.roots([1.0, k3, k4])
    roots = (-k1 + 0j, complex(quad[0]), complex(quad[1]))
    stable = k1 > 0 and k3 > 0 and k4 > 0
    return StabilityReport(stable=stable, applicable=True, roots=roots)
