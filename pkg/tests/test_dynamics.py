import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roadplan.dynamics import (DelayedControl, KinematicControl, ModelVariant,
                               RateControl, VehicleParams, VehicleState,
                               center, derivative, front_axle, integrate,
                               rotation)
from roadplan.errors import MismatchedVariant, SteeringSingularity

PARAMS = VehicleParams(wheelbase=2.7, width=1.8, delta_max=1.2)


def test_rotation_identity():
    assert np.allclose(rotation(0.0), np.eye(2))


def test_rotation_quarter_turn():
    assert np.allclose(rotation(math.pi / 2), [[0, -1], [1, 0]], atol=1e-15)


def test_rotation_orthogonal():
    S = rotation(0.7)
    assert np.max(np.abs(S @ S.T - np.eye(2))) < 1e-12
    assert abs(np.linalg.det(S) - 1.0) < 1e-12


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_rotation_composition(alpha, beta):
    lhs = rotation(alpha) @ rotation(beta)
    assert np.max(np.abs(lhs - rotation(alpha + beta))) < 1e-12


def test_derivative_straight():
    d = derivative(VehicleState(0, 0, 0), KinematicControl(10.0, 0.0), PARAMS,
                   ModelVariant.KINEMATIC3)
    assert np.allclose(d, [10.0, 0.0, 0.0])


def test_derivative_rotated():
    d = derivative(VehicleState(0, 0, math.pi / 2), KinematicControl(5.0, 0.0),
                   PARAMS, ModelVariant.KINEMATIC3)
    assert np.allclose(d, [0.0, 5.0, 0.0], atol=1e-12)


def test_derivative_yaw_rate():
    # v/l * tan(delta) with tan(delta) = 0.27 and l = 2.7 gives exactly 1
    d = derivative(VehicleState(0, 0, 0), KinematicControl(10.0, math.atan(0.27)),
                   PARAMS, ModelVariant.KINEMATIC3)
    assert abs(d[2] - 1.0) < 1e-12


def test_derivative_delayed_velocity():
    params = VehicleParams(wheelbase=2.7, v_delay=2.0)
    d = derivative(VehicleState(0, 0, 0, v=5.0), DelayedControl(v_des=10.0, w=0.0),
                   params, ModelVariant.DELAYED5)
    assert abs(d[3] - 2.5) < 1e-12


def test_variant_mismatch():
    with pytest.raises(MismatchedVariant):
        derivative(VehicleState(0, 0, 0), RateControl(0.0, 0.0), PARAMS,
                   ModelVariant.KINEMATIC3)


def test_steering_singularity():
    with pytest.raises(SteeringSingularity):
        derivative(VehicleState(0, 0, 0), KinematicControl(1.0, math.pi / 2),
                   PARAMS, ModelVariant.KINEMATIC3)


def test_front_axle_and_center():
    s = VehicleState(0, 0, 0)
    assert np.allclose(front_axle(s, PARAMS), [2.7, 0.0])
    assert np.allclose(center(s, PARAMS), [1.35, 0.0])
    s90 = VehicleState(0, 0, math.pi / 2)
    assert np.allclose(front_axle(s90, PARAMS), [0.0, 2.7], atol=1e-12)
    p2 = VehicleParams(wheelbase=2.0)
    s45 = VehicleState(0, 0, math.pi / 4)
    assert np.allclose(front_axle(s45, p2), [math.sqrt(2), math.sqrt(2)])


@pytest.mark.parametrize("method", ["euler", "rk4"])
def test_integrate_straight_exact(method):
    # binary-representable step so the x accumulation is exact
    traj = integrate(VehicleState(0, 0, 0), KinematicControl(1.0, 0.0), PARAMS,
                     ModelVariant.KINEMATIC3, 0.0, 10.0, 0.5, method=method)
    assert traj.states[-1][0] == 10.0
    assert traj.states[-1][1] == 0.0
    assert traj.states[-1][2] == 0.0


def test_integrate_final_time_hit_exactly():
    traj = integrate(VehicleState(0, 0, 0), KinematicControl(1.0, 0.0), PARAMS,
                     ModelVariant.KINEMATIC3, 0.0, 1.05, 0.25)
    assert traj.times[-1] == pytest.approx(1.05, abs=1e-15)


CIRCLE_U = KinematicControl(1.0, math.pi / 4)
CIRCLE_PERIOD = 2 * math.pi * 2.7       # radius l / tan(pi/4) = 2.7


def test_rk4_circle_accuracy():
    traj = integrate(VehicleState(0, 0, 0), CIRCLE_U, PARAMS,
                     ModelVariant.KINEMATIC3, 0.0, CIRCLE_PERIOD,
                     CIRCLE_PERIOD / 512)
    assert float(np.linalg.norm(traj.states[-1][:2])) < 1e-6


def quarter_circle_error(h_fraction):
    """Endpoint error after a quarter turn vs the closed-form circle (full
    laps cancel the local truncation errors by symmetry, quarters do not)."""
    R = 2.7
    T = CIRCLE_PERIOD / 4
    traj = integrate(VehicleState(0, 0, 0), CIRCLE_U, PARAMS,
                     ModelVariant.KINEMATIC3, 0.0, T, T * h_fraction)
    return float(np.linalg.norm(traj.states[-1][:2] - np.array([R, R])))


def test_rk4_convergence_order():
    e1 = quarter_circle_error(1 / 8)
    e2 = quarter_circle_error(1 / 16)
    order = math.log2(e1 / e2)
    assert 3.7 <= order <= 4.3
    assert quarter_circle_error(1 / 2) / quarter_circle_error(1 / 4) == pytest.approx(16, rel=0.4)


def test_zero_steering_preserves_heading():
    for method in ("euler", "rk4"):
        traj = integrate(VehicleState(1, 2, 0.3), KinematicControl(3.0, 0.0),
                         PARAMS, ModelVariant.KINEMATIC3, 0.0, 5.0, 0.1,
                         method=method)
        assert np.all(traj.states[:, 2] == traj.states[0, 2])


@given(st.floats(-3, 3), st.floats(-8, 8), st.floats(-1.0, 1.0))
def test_speed_consistency(psi, v, delta):
    d = derivative(VehicleState(0, 0, psi), KinematicControl(v, delta), PARAMS,
                   ModelVariant.KINEMATIC3)
    assert abs(math.hypot(d[0], d[1]) - abs(v)) < 1e-12


def test_delayed_velocity_exponential_decay():
    params = VehicleParams(wheelbase=2.7, v_delay=0.8)
    u = DelayedControl(v_des=6.0, w=0.0)
    traj = integrate(VehicleState(0, 0, 0, v=1.0), u, params,
                     ModelVariant.DELAYED5, 0.0, 4.0, 0.01)
    v = traj.states[:, 3]
    assert np.all(np.diff(v) > 0)                     # monotone approach
    expected = 6.0 - 5.0 * np.exp(-traj.times / 0.8)
    assert np.max(np.abs(v - expected)) < 1e-8


def test_invalid_params():
    with pytest.raises(ValueError):
        VehicleParams(wheelbase=-1.0)
    with pytest.raises(ValueError):
        VehicleParams(delta_max=2.0)
