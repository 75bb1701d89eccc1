"""Kinematic car models and fixed-step integration.

Three model variants are supported:

* ``KINEMATIC3``   -- states (x, y, psi), inputs (v, delta)
* ``RATE5``        -- states (x, y, psi, v, delta), inputs (w, a)
* ``DELAYED5``     -- states (x, y, psi, v, delta), inputs (v_des, w),
  with a first-order velocity lag of time constant T.

(x, y) is the midpoint of the rear axle, psi the yaw angle, v the speed,
delta the front steering angle.  psi is never wrapped during integration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np

from .errors import MismatchedVariant, SteeringSingularity

# tan(delta) blows up at pi/2; anything this close is treated as invalid
DELTA_SINGULARITY = math.pi / 2 - 1e-6


class ModelVariant(Enum):
    KINEMATIC3 = "kinematic3"
    RATE5 = "rate_controlled5"
    DELAYED5 = "delayed_velocity5"

    @property
    def state_dim(self) -> int:
        return 3 if self is ModelVariant.KINEMATIC3 else 5


@dataclass(frozen=True)
class VehicleParams:
    """Geometric and actuator limits of one vehicle.

    wheelbase   [m]   rear-axle to front-axle distance
    width       [m]   body width
    v_min/v_max [m/s] speed bounds
    delta_max   [rad] steering angle bound (symmetric)
    a_min/a_max [m/s^2] acceleration bounds
    w_max       [rad/s] steering-rate bound (symmetric)
    v_delay     [s]   time constant of the delayed-velocity variant
    """

    wheelbase: float = 2.7
    width: float = 1.8
    v_min: float = 0.0
    v_max: float = 10.0
    delta_max: float = math.pi / 6
    a_min: float = -1.0
    a_max: float = 1.0
    w_max: float = 0.5
    v_delay: float = 0.5

    def __post_init__(self) -> None:
        if self.wheelbase <= 0 or self.width <= 0:
            raise ValueError("wheelbase and width must be positive")
        if self.v_min > self.v_max or self.a_min > self.a_max:
            raise ValueError("lower bounds must not exceed upper bounds")
        if not 0.0 < self.delta_max < math.pi / 2:
            raise ValueError("delta_max must lie in (0, pi/2)")
        if self.w_max <= 0:
            raise ValueError("w_max must be positive")
        if self.v_delay <= 0:
            raise ValueError("v_delay must be positive")


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    psi: float
    v: float = 0.0
    delta: float = 0.0

    def as_array(self, variant: ModelVariant) -> np.ndarray:
        if variant is ModelVariant.KINEMATIC3:
            return np.array([self.x, self.y, self.psi])
        return np.array([self.x, self.y, self.psi, self.v, self.delta])

    @staticmethod
    def from_array(z: Sequence[float]) -> "VehicleState":
        z = list(z)
        if len(z) == 3:
            return VehicleState(z[0], z[1], z[2])
        return VehicleState(z[0], z[1], z[2], z[3], z[4])


@dataclass(frozen=True)
class KinematicControl:
    """Direct (v, delta) input for the 3-state model."""

    v: float
    delta: float


@dataclass(frozen=True)
class RateControl:
    """(w, a) input for the 5-state model: steering rate and acceleration."""

    w: float
    a: float


@dataclass(frozen=True)
class DelayedControl:
    """(v_des, w) input for the delayed-velocity 5-state model."""

    v_des: float
    w: float


ControlInput = Union[KinematicControl, RateControl, DelayedControl]

_EXPECTED_CONTROL = {
    ModelVariant.KINEMATIC3: KinematicControl,
    ModelVariant.RATE5: RateControl,
    ModelVariant.DELAYED5: DelayedControl,
}


def rotation(psi: float) -> np.ndarray:
    """2x2 rotation matrix mapping body coordinates to world coordinates."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s], [s, c]])


def front_axle(state: VehicleState, params: VehicleParams) -> np.ndarray:
    """World position of the front-axle midpoint."""
    ell = params.wheelbase
    return np.array([state.x + ell * math.cos(state.psi),
                     state.y + ell * math.sin(state.psi)])


def center(state: VehicleState, params: VehicleParams) -> np.ndarray:
    """Geometric center of the vehicle body (half a wheelbase ahead of the rear axle)."""
    half = 0.5 * params.wheelbase
    return np.array([state.x + half * math.cos(state.psi),
                     state.y + half * math.sin(state.psi)])


def _check_delta(delta: float) -> None:
    if abs(delta) >= DELTA_SINGULARITY:
        raise SteeringSingularity(f"steering angle {delta:.6f} rad too close to pi/2")


def derivative(state: VehicleState, u: ControlInput, params: VehicleParams,
               variant: ModelVariant) -> np.ndarray:
    """Right-hand side of the selected car model at one state/input pair."""
    if not isinstance(u, _EXPECTED_CONTROL[variant]):
        raise MismatchedVariant(
            f"{type(u).__name__} is not valid for variant {variant.value}")

    if variant is ModelVariant.KINEMATIC3:
        _check_delta(u.delta)
        return np.array([
            u.v * math.cos(state.psi),
            u.v * math.sin(state.psi),
            u.v / params.wheelbase * math.tan(u.delta),
        ])

    _check_delta(state.delta)
    common = [
        state.v * math.cos(state.psi),
        state.v * math.sin(state.psi),
        state.v / params.wheelbase * math.tan(state.delta),
    ]
    if variant is ModelVariant.RATE5:
        return np.array(common + [u.a, u.w])
    # delayed velocity: first-order lag toward the commanded speed
    return np.array(common + [(u.v_des - state.v) / params.v_delay, u.w])


ControlSignal = Union[ControlInput, Callable[[float], ControlInput]]


def _signal_at(signal: ControlSignal, t: float) -> ControlInput:
    if callable(signal):
        return signal(t)
    return signal


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped state samples, one row per time."""

    times: np.ndarray            # (n,)
    states: np.ndarray           # (n, state_dim)
    variant: ModelVariant

    def state_at(self, i: int) -> VehicleState:
        return VehicleState.from_array(self.states[i])

    def __len__(self) -> int:
        return len(self.times)


def _rhs_array(z: np.ndarray, u: ControlInput, params: VehicleParams,
               variant: ModelVariant) -> np.ndarray:
    return derivative(VehicleState.from_array(z), u, params, variant)


def integrate(state: VehicleState, signal: ControlSignal, params: VehicleParams,
              variant: ModelVariant, t0: float, t1: float, h: float,
              method: str = "rk4") -> Trajectory:
    """Integrate the car model with a fixed step.

    The control signal is sampled at the start of every substep and held
    constant across it (zero-order hold).  The final time is hit exactly;
    the last step is shortened when (t1 - t0) is not a multiple of h.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown method {method!r}")

    z = state.as_array(variant)
    times = [t0]
    states = [z.copy()]
    t = t0
    while t < t1 - 1e-12:
        step = min(h, t1 - t)
        u = _signal_at(signal, t)
        if method == "euler":
            z = z + step * _rhs_array(z, u, params, variant)
        else:
            k1 = _rhs_array(z, u, params, variant)
            k2 = _rhs_array(z + 0.5 * step * k1, u, params, variant)
            k3 = _rhs_array(z + 0.5 * step * k2, u, params, variant)
            k4 = _rhs_array(z + step * k3, u, params, variant)
            z = z + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + step
        times.append(t)
        states.append(z.copy())
    return Trajectory(np.array(times), np.array(states), variant)


# --- array-level kernels used by the OCP transcription -----------------------

def rate5_rhs(Z: np.ndarray, U: np.ndarray, ell: float) -> np.ndarray:
    """Vectorized RHS of the (w, a)-controlled 5-state model.

    Z: (..., 5) states, U: (..., 2) controls ordered (w, a).
    """
    x, y, psi, v, delta = np.moveaxis(Z, -1, 0)
    w, a = np.moveaxis(U, -1, 0)
    return np.stack([
        v * np.cos(psi),
        v * np.sin(psi),
        v / ell * np.tan(delta),
        a,
        w,
    ], axis=-1)


def rate5_jacobians(Z: np.ndarray, U: np.ndarray, ell: float):
    """Vectorized Jacobians (d f/d z, d f/d u) of :func:`rate5_rhs`."""
    shape = Z.shape[:-1]
    x, y, psi, v, delta = np.moveaxis(Z, -1, 0)
    cos_p, sin_p = np.cos(psi), np.sin(psi)
    sec2 = 1.0 / np.cos(delta) ** 2

    fz = np.zeros(shape + (5, 5))
    fz[..., 0, 2] = -v * sin_p
    fz[..., 0, 3] = cos_p
    fz[..., 1, 2] = v * cos_p
    fz[..., 1, 3] = sin_p
    fz[..., 2, 3] = np.tan(delta) / ell
    fz[..., 2, 4] = v * sec2 / ell

    fu = np.zeros(shape + (5, 2))
    fu[..., 3, 1] = 1.0   # dv/da
    fu[..., 4, 0] = 1.0   # ddelta/dw
    return fz, fu
