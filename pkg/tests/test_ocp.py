import math

import numpy as np
import pytest

from roadplan import ocp
from roadplan.ocp.problem import (BoundaryCondition, Discretization, FreeTime,
                                  Mayer, OcpProblem)


class OneD(ocp.Dynamics):
    """x' = u."""

    nz = 1
    nu = 1

    def rhs(self, Z, U, p):
        return U.copy()

    def jac(self, Z, U, p):
        n = Z.shape[0]
        return np.zeros((n, 1, 1)), np.ones((n, 1, 1))


class DoubleIntegrator(ocp.Dynamics):
    nz = 2
    nu = 1

    def rhs(self, Z, U, p):
        return np.stack([Z[:, 1], U[:, 0]], axis=-1)

    def jac(self, Z, U, p):
        n = Z.shape[0]
        fz = np.zeros((n, 2, 2))
        fz[:, 0, 1] = 1.0
        fu = np.zeros((n, 2, 1))
        fu[:, 1, 0] = 1.0
        return fz, fu


def tf_mayer(nz):
    return Mayer(value=lambda zf, tf, s, p: tf,
                 grad_zf=lambda zf, tf, s, p: np.zeros(nz),
                 grad_tf=lambda zf, tf, s, p: 1.0,
                 grad_s=lambda zf, tf, s, p: np.zeros(len(s)))


def test_variable_count_by_construction():
    prob = OcpProblem(dynamics=DoubleIntegrator(),
                      tf=FreeTime(guess=1.0),
                      boundary=ocp.fixed_boundary({0: 0.0, 1: 0.0},
                                                  {0: 1.0, 1: 0.0}, 2),
                      z0_guess=np.zeros(2), zf_guess=np.array([1.0, 0.0]))
    nlp = ocp.discretize(prob, Discretization(n_nodes=3))
    # 3 state nodes x 2 + 2 control intervals x 1 + 1 time scale
    assert nlp.n_vars == 3 * 2 + 2 * 1 + 1
    assert nlp.me == 2 * 2 + 4      # defects + boundary rows


def test_defects_vanish_on_integrated_trajectory():
    """Hand-integrate with the same scheme, substitute, residual ~ 0."""
    prob = OcpProblem(dynamics=DoubleIntegrator(), tf=2.0,
                      z0_guess=np.zeros(2), zf_guess=np.zeros(2))
    nlp = ocp.discretize(prob, Discretization(n_nodes=11))
    rng = np.random.default_rng(0)
    U = rng.uniform(-1, 1, size=(10, 1))
    h = 2.0 / 10
    Z = np.zeros((11, 2))
    for k in range(10):
        z = Z[k]
        u = U[k]

        def f(zz):
            return np.array([zz[1], u[0]])

        k1 = f(z)
        k2 = f(z + h / 2 * k1)
        k3 = f(z + h / 2 * k2)
        k4 = f(z + h * k3)
        Z[k + 1] = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    x = nlp.pack(Z, U, 2.0, np.zeros(0))
    assert np.max(np.abs(nlp.eq_constraints(x))) < 1e-10


def test_time_optimal_one_d():
    """min tf, x' = u, |u| <= 2, x: 0 -> 3; analytic optimum tf = 1.5."""
    prob = OcpProblem(dynamics=OneD(),
                      tf=FreeTime(guess=1.0, lower=0.1, upper=10.0),
                      mayer=tf_mayer(1),
                      boundary=ocp.fixed_boundary({0: 0.0}, {0: 3.0}, 1),
                      u_lower=np.array([-2.0]), u_upper=np.array([2.0]),
                      z0_guess=np.array([0.0]), zf_guess=np.array([3.0]))
    sol, nlp, res = ocp.solve(prob, Discretization(n_nodes=21))
    assert res.success
    assert sol.tf == pytest.approx(1.5, abs=1e-4)
    assert np.allclose(sol.controls, 2.0, atol=1e-6)


def test_newton_solves_quadratic_in_two_iterations():
    """Unconstrained convex quadratic: the Newton backend lands exactly."""

    class Static(ocp.Dynamics):
        nz, nu = 1, 0

        def rhs(self, Z, U, p):
            return np.zeros_like(Z)

        def jac(self, Z, U, p):
            n = Z.shape[0]
            return np.zeros((n, 1, 1)), np.zeros((n, 1, 0))

    Q = np.array([[3.0, 0.5], [0.5, 1.0]])
    b = np.array([1.0, -2.0])

    def mval(zf, tf, s, p):
        return 0.5 * float(s @ Q @ s) + float(b @ s)

    prob = OcpProblem(dynamics=Static(), tf=1.0,
                      mayer=Mayer(value=mval,
                                  grad_zf=lambda zf, tf, s, p: np.zeros(1),
                                  grad_tf=lambda zf, tf, s, p: 0.0,
                                  grad_s=lambda zf, tf, s, p: Q @ s + b),
                      statics=[ocp.StaticVar("a", 0.0, -10, 10),
                               ocp.StaticVar("b", 0.0, -10, 10)],
                      z0_guess=np.zeros(1), zf_guess=np.zeros(1))
    nlp = ocp.discretize(prob, Discretization(n_nodes=2))
    res = ocp.solve_nlp(nlp, nlp.make_guess(),
                        ocp.SolveOptions(backend="newton"))
    assert res.success
    assert res.polish_iterations <= 2
    expected = -np.linalg.solve(Q, b)
    _, _, _, s = nlp.unpack(res.x)
    assert np.max(np.abs(s - expected)) < 1e-10


def test_mayer_only_reformulation_matches():
    """Moving the Lagrange term into an augmented state preserves the
    optimal value."""
    prob = OcpProblem(dynamics=DoubleIntegrator(), tf=1.0,
                      lagrange=ocp.control_energy([1.0]),
                      boundary=ocp.fixed_boundary({0: 0.0, 1: 0.0},
                                                  {0: 1.0, 1: 0.0}, 2),
                      u_lower=np.array([-50.0]), u_upper=np.array([50.0]),
                      z0_guess=np.zeros(2), zf_guess=np.array([1.0, 0.0]))
    sol, _, res = ocp.solve(prob, Discretization(n_nodes=41))
    assert res.success

    class Augmented(ocp.Dynamics):
        nz, nu = 3, 1

        def rhs(self, Z, U, p):
            return np.stack([Z[:, 1], U[:, 0], U[:, 0] ** 2], axis=-1)

        def jac(self, Z, U, p):
            n = Z.shape[0]
            fz = np.zeros((n, 3, 3))
            fz[:, 0, 1] = 1.0
            fu = np.zeros((n, 3, 1))
            fu[:, 1, 0] = 1.0
            fu[:, 2, 0] = 2.0 * U[:, 0]
            return fz, fu

    aug = OcpProblem(dynamics=Augmented(), tf=1.0,
                     mayer=Mayer(value=lambda zf, tf, s, p: zf[2],
                                 grad_zf=lambda zf, tf, s, p: np.array([0, 0, 1.0]),
                                 grad_tf=lambda zf, tf, s, p: 0.0,
                                 grad_s=lambda zf, tf, s, p: np.zeros(0)),
                     boundary=ocp.fixed_boundary({0: 0.0, 1: 0.0, 2: 0.0},
                                                 {0: 1.0, 1: 0.0}, 3),
                     u_lower=np.array([-50.0]), u_upper=np.array([50.0]),
                     z0_guess=np.zeros(3), zf_guess=np.array([1.0, 0.0, 12.0]))
    sol2, _, res2 = ocp.solve(aug, Discretization(n_nodes=41))
    assert res2.success
    assert abs(sol.objective - sol2.objective) < 1e-6
    # analytic optimum of min-energy rest-to-rest: u = 6 - 12 t, J = 12
    assert sol.objective == pytest.approx(12.0, rel=2e-3)


def test_eta_profile():
    assert ocp.eta(3.0) == 0.0
    assert ocp.eta(0.0) == -3.0
    assert ocp.eta(2.45) == pytest.approx(-1.5, abs=1e-12)
    # continuity at the seams
    assert abs(ocp.eta(2.4 + 1e-9) - (-3.0)) < 1e-5
    assert abs(ocp.eta(2.5 - 1e-9)) < 1e-5
    # derivative continuity by central differences across both seams
    for seam in (2.4, 2.5):
        left = (ocp.eta(seam - 1e-6) - ocp.eta(seam - 3e-6)) / 2e-6
        right = (ocp.eta(seam + 3e-6) - ocp.eta(seam + 1e-6)) / 2e-6
        assert abs(left - right) < 1e-2
    # analytic derivative matches finite differences inside the blend
    for x in (2.42, -2.47, 2.49):
        fd = (ocp.eta(x + 1e-7) - ocp.eta(x - 1e-7)) / 2e-7
        assert abs(ocp.eta_prime(x) - fd) < 1e-5


def test_ramp_profile():
    d, h = 3.0, 2.5
    assert ocp.ramp(d - 1.0, d, h) == 0.0
    assert ocp.ramp(d + 2.0, d, h) == h
    # both one-sided limits at the middle seam give h/2
    assert ocp.ramp(d + 0.5 - 1e-12, d, h) == pytest.approx(h / 2, abs=1e-9)
    assert ocp.ramp(d + 0.5, d, h) == pytest.approx(h / 2, abs=1e-12)
    # C1 at the middle seam: both branch derivatives equal 3h
    dx_lo = 12.0 * h * 0.5 ** 2
    dx_hi = 12.0 * h * (0.5 - 1.0) ** 2
    assert dx_lo == dx_hi == 3.0 * h
    for x in (d - 0.5, d + 0.2, d + 0.7, d + 1.5):
        fd = (ocp.ramp(x + 1e-7, d, h) - ocp.ramp(x - 1e-7, d, h)) / 2e-7
        assert abs(ocp.ramp_partials(x, d, h)[0] - fd) < 1e-5


def test_parking_problem_boundary_and_guess():
    prob = ocp.parking_problem()
    zf = np.array([-1.25, -1.5, 0.0, 0.0, 0.0])
    res = prob.boundary.value(np.array([2.5, 1.5, 0, 0, 0]), zf, 12.0,
                              np.zeros(0), prob.p)
    assert np.max(np.abs(res)) == 0.0
    # the straight-line initial guess cuts through the curb
    nlp = ocp.discretize(prob, Discretization(n_nodes=21))
    g = nlp.ineq_constraints(nlp.make_guess())
    assert np.sum(g > 0) > 0


def test_parking_objective_at_zero_steering_equals_tf():
    prob = ocp.parking_problem()
    nlp = ocp.discretize(prob, Discretization(n_nodes=11))
    Z = np.repeat(prob.z0_guess[None, :], 11, axis=0)
    x = nlp.pack(Z, np.zeros((10, 2)), 9.0, np.zeros(0))
    assert nlp.objective(x) == pytest.approx(9.0, abs=1e-12)


def test_avoidance_problem_nominal_structure():
    prob = ocp.avoidance_problem(p=(0.0, 0.0))
    # corridor upper bound: y <= 8 - b/2 = 7 for b = 2
    assert prob.z_upper[1] == pytest.approx(7.0)
    # nominal obstacle is stationary: the path constraint has no time slope
    nlp = ocp.discretize(prob, Discretization(n_nodes=7))
    x = nlp.make_guess()
    Z, U, sigma, s = nlp.unpack(x)
    tt = sigma * nlp.tau
    _, _, dT = prob.path[0].jac(tt, Z, s, prob.p)
    assert np.max(np.abs(dT)) == 0.0


def test_gradient_and_jacobians_match_fd():
    prob = ocp.avoidance_problem(p=(0.03, -0.02))
    nlp = ocp.discretize(prob, Discretization(n_nodes=6, path_midpoints=True))
    rng = np.random.default_rng(4)
    x = nlp.make_guess() + 0.01 * rng.normal(size=nlp.n_vars)

    def fd(f, x, h=1e-7):
        f0 = np.atleast_1d(f(x))
        out = np.zeros((f0.size, len(x)))
        for i in range(len(x)):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            out[:, i] = (np.atleast_1d(f(xp)) - np.atleast_1d(f(xm))) / (2 * h)
        return out

    assert np.max(np.abs(nlp.gradient(x) - fd(nlp.objective, x)[0])) < 1e-5
    assert np.max(np.abs(nlp.eq_jacobian(x) - fd(nlp.eq_constraints, x))) < 1e-5
    assert np.max(np.abs(nlp.ineq_jacobian(x) - fd(nlp.ineq_constraints, x))) < 1e-5


def test_euler_scheme_supported():
    prob = OcpProblem(dynamics=OneD(),
                      tf=FreeTime(guess=1.0, lower=0.1, upper=10.0),
                      mayer=tf_mayer(1),
                      boundary=ocp.fixed_boundary({0: 0.0}, {0: 3.0}, 1),
                      u_lower=np.array([-2.0]), u_upper=np.array([2.0]),
                      z0_guess=np.array([0.0]), zf_guess=np.array([3.0]))
    sol, _, res = ocp.solve(prob, Discretization(n_nodes=11, scheme="euler"))
    assert res.success
    assert sol.tf == pytest.approx(1.5, abs=1e-6)
