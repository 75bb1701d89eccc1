"""Concrete optimal control problems: parking and obstacle avoidance.

Both use the 5-state car (x, y, psi, v, delta) with controls (w, a) =
(steering rate, acceleration).  The parking lot boundary `eta` and the
avoidance obstacle profile `ramp` are piecewise cubic and continuously
differentiable, so they can sit directly inside an SQP as path constraints.

`solve_parking` / `solve_avoidance` are the tuned drivers: documented
straight-line initial guess, globalization homotopy, then mesh refinement
to the requested grid.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from ..dynamics import rate5_jacobians, rate5_rhs
from .problem import (BoundaryCondition, Discretization, Dynamics, FreeTime,
                      Lagrange, Mayer, OcpProblem, PathConstraint, StaticVar)


class Rate5Dynamics(Dynamics):
    """(w, a)-controlled kinematic car with wheelbase `ell`."""

    nz = 5
    nu = 2

    def __init__(self, ell: float):
        self.ell = ell

    def rhs(self, Z, U, p):
        return rate5_rhs(Z, U, self.ell)

    def jac(self, Z, U, p):
        return rate5_jacobians(Z, U, self.ell)


class ScalarSpeedDynamics(Dynamics):
    """Arc-length progress s' = v; used by the spline-following MPC."""

    nz = 1
    nu = 1

    def rhs(self, Z, U, p):
        return U.copy()

    def jac(self, Z, U, p):
        n = Z.shape[0]
        return np.zeros((n, 1, 1)), np.ones((n, 1, 1))


# --- parking-lot depth profile ------------------------------------------------

def eta(x):
    """Lot boundary: 0 on the road shoulder, -3 inside the bay, cubic blend."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    t = ax - 2.5
    blend = -900.0 * t ** 2 - 6000.0 * t ** 3
    return np.where(ax >= 2.5, 0.0, np.where(ax <= 2.4, -3.0, blend))


def eta_prime(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    t = ax - 2.5
    dblend = (-1800.0 * t - 18000.0 * t ** 2) * np.sign(x)
    return np.where((ax < 2.5) & (ax > 2.4), dblend, 0.0)


# --- avoidance obstacle profile -------------------------------------------------

def ramp(x, d, h):
    """Smooth step of height h starting at x = d, finished by x = d + 1."""
    x = np.asarray(x, dtype=float)
    u = x - d
    lo = 4.0 * h * u ** 3
    hi = 4.0 * h * (u - 1.0) ** 3 + h
    return np.where(u < 0.0, 0.0,
                    np.where(u < 0.5, lo, np.where(u < 1.0, hi, h)))


def ramp_partials(x, d, h):
    """(d/dx, d/dd, d/dh) of ramp; d/dd = -d/dx since only x - d enters."""
    x = np.asarray(x, dtype=float)
    u = x - d
    in_lo = (u >= 0.0) & (u < 0.5)
    in_hi = (u >= 0.5) & (u < 1.0)
    dx = np.where(in_lo, 12.0 * h * u ** 2,
                  np.where(in_hi, 12.0 * h * (u - 1.0) ** 2, 0.0))
    dh = np.where(u < 0.0, 0.0,
                  np.where(in_lo, 4.0 * u ** 3,
                           np.where(in_hi, 4.0 * (u - 1.0) ** 3 + 1.0, 1.0)))
    return dx, -dx, dh


# --- boundary-condition helper --------------------------------------------------

def fixed_boundary(z0_fix: dict, zf_fix: dict, nz: int) -> BoundaryCondition:
    """Pin individual state components at t0 / tf.  Keys are state indices."""
    idx0 = sorted(z0_fix)
    idxf = sorted(zf_fix)
    nb = len(idx0) + len(idxf)

    def value(z0, zf, tf, s, p):
        r0 = [z0[i] - z0_fix[i] for i in idx0]
        rf = [zf[i] - zf_fix[i] for i in idxf]
        return np.array(r0 + rf, dtype=float)

    def jac(z0, zf, tf, s, p):
        d_z0 = np.zeros((nb, nz))
        d_zf = np.zeros((nb, nz))
        for r, i in enumerate(idx0):
            d_z0[r, i] = 1.0
        for r, i in enumerate(idxf):
            d_zf[len(idx0) + r, i] = 1.0
        return d_z0, d_zf, np.zeros(nb), np.zeros((nb, len(s)))

    return BoundaryCondition(nb=nb, value=value, jac=jac)


def control_energy(weights) -> Lagrange:
    """Lagrange integrand sum_i weights[i] * u_i^2."""
    w = np.asarray(weights, dtype=float)

    def value(Z, U, p):
        return (U ** 2) @ w

    def grad_z(Z, U, p):
        return np.zeros_like(Z)

    def grad_u(Z, U, p):
        return 2.0 * U * w

    return Lagrange(value=value, grad_z=grad_z, grad_u=grad_u)


# --- Example: parking into a bay -------------------------------------------------

PARKING_WHEELBASE = 2.7
PARKING_WIDTH = 1.8


def _right_side_points(Z, ell, half_b):
    """Right rear/front wheel positions of all states; right side is -b/2."""
    x, y, psi = Z[:, 0], Z[:, 1], Z[:, 2]
    sin_p, cos_p = np.sin(psi), np.cos(psi)
    xr = x + half_b * sin_p
    yr = y - half_b * cos_p
    xf = x + ell * cos_p + half_b * sin_p
    yf = y + ell * sin_p - half_b * cos_p
    return xr, yr, xf, yf


def parking_lot_constraint(ell: float = PARKING_WHEELBASE,
                           width: float = PARKING_WIDTH) -> PathConstraint:
    """Both right wheels must stay above the lot profile: eta(x_w) - y_w <= 0."""
    half_b = width / 2.0

    def value(tt, Z, s, p):
        xr, yr, xf, yf = _right_side_points(Z, ell, half_b)
        return np.stack([eta(xr) - yr, eta(xf) - yf], axis=-1)

    def jac(tt, Z, s, p):
        n = Z.shape[0]
        x, y, psi = Z[:, 0], Z[:, 1], Z[:, 2]
        sin_p, cos_p = np.sin(psi), np.cos(psi)
        xr, yr, xf, yf = _right_side_points(Z, ell, half_b)
        dZ = np.zeros((n, 2, Z.shape[1]))
        er, ef = eta_prime(xr), eta_prime(xf)
        # rear: x_r = x + (b/2) sin psi, y_r = y - (b/2) cos psi
        dZ[:, 0, 0] = er
        dZ[:, 0, 1] = -1.0
        dZ[:, 0, 2] = er * half_b * cos_p - half_b * sin_p
        # front: adds the wheelbase offset
        dZ[:, 1, 0] = ef
        dZ[:, 1, 1] = -1.0
        dZ[:, 1, 2] = ef * (-ell * sin_p + half_b * cos_p) - (ell * cos_p + half_b * sin_p)
        return dZ, np.zeros((n, 2, len(s))), np.zeros((n, 2))

    return PathConstraint(ng=2, value=value, jac=jac, label="parking_lot")


def parking_problem() -> OcpProblem:
    """Minimum time + steering effort parking maneuver (free final time)."""
    nz = 5
    dyn = Rate5Dynamics(PARKING_WHEELBASE)
    z0 = np.array([2.5, 1.5, 0.0, 0.0, 0.0])
    zf = np.array([-1.25, -1.5, 0.0, 0.0, 0.0])

    mayer = Mayer(value=lambda zfv, tf, s, p: tf,
                  grad_zf=lambda zfv, tf, s, p: np.zeros(nz),
                  grad_tf=lambda zfv, tf, s, p: 1.0,
                  grad_s=lambda zfv, tf, s, p: np.zeros(0))

    return OcpProblem(
        dynamics=dyn,
        t0=0.0,
        tf=FreeTime(guess=10.0, lower=1.0, upper=60.0),
        mayer=mayer,
        lagrange=control_energy([1.0, 0.0]),         # integral of w^2
        path=[parking_lot_constraint()],
        boundary=fixed_boundary(dict(enumerate(z0)), dict(enumerate(zf)), nz),
        u_lower=np.array([-0.5, -0.5]),
        u_upper=np.array([0.5, 0.5]),
        z_lower=np.array([-np.inf, -np.inf, -np.inf, -np.inf, -math.pi / 6]),
        z_upper=np.array([np.inf, np.inf, np.inf, np.inf, math.pi / 6]),
        z0_guess=z0,
        zf_guess=zf,
    )


# --- Example: high-speed obstacle avoidance --------------------------------------

@dataclass(frozen=True)
class AvoidanceParams:
    v_obs: float = 100.0 / 3.6          # [m/s] obstacle speed when p2 != 0
    psi_obs: float = math.radians(170)  # [rad] obstacle heading
    road_width: float = 8.0             # [m]
    wheelbase: float = 2.7
    width: float = 2.0
    v0: float = 27.78                   # [m/s] initial car speed
    y0: float = 1.75
    y_obs0: float = 3.5
    end_offset: float = 3.0             # terminal x past the obstacle


def avoidance_problem(p=(0.0, 0.0), params: AvoidanceParams = AvoidanceParams()) -> OcpProblem:
    """Minimal standoff distance d for a feasible avoidance maneuver.

    p[0] perturbs the initial yaw angle, p[1] scales the obstacle motion;
    d is a static decision variable entering the objective and the obstacle
    position x_obs(t) = d + t * p2 * v_obs * cos(psi_obs).
    """
    nz = 5
    ap = params
    dyn = Rate5Dynamics(ap.wheelbase)
    half_b = ap.width / 2.0
    vc = ap.v_obs * math.cos(ap.psi_obs)
    vs = ap.v_obs * math.sin(ap.psi_obs)

    def x_obs(t, d, p):
        return d + t * p[1] * vc

    def y_obs(t, p):
        return ap.y_obs0 + t * p[1] * vs

    def path_value(tt, Z, s, p):
        d = s[0]
        g = ramp(Z[:, 0], x_obs(tt, d, p), y_obs(tt, p)) + half_b - Z[:, 1]
        return g[:, None]

    def path_jac(tt, Z, s, p):
        n = Z.shape[0]
        d = s[0]
        xo, yo = x_obs(tt, d, p), y_obs(tt, p)
        rx, rd, rh = ramp_partials(Z[:, 0], xo, yo)
        dZ = np.zeros((n, 1, nz))
        dZ[:, 0, 0] = rx
        dZ[:, 0, 1] = -1.0
        dS = rd[:, None, None].copy()
        dT = (rd * (p[1] * vc) + rh * (p[1] * vs))[:, None]
        return dZ, dS, dT

    obstacle = PathConstraint(ng=1, value=path_value, jac=path_jac, label="obstacle")

    # boundary: full initial state (psi(0) = p1), terminal x/psi/delta
    def b_value(z0, zf, tf, s, p):
        d = s[0]
        return np.array([
            z0[0] - 0.0,
            z0[1] - ap.y0,
            z0[2] - p[0],
            z0[3] - ap.v0,
            z0[4] - 0.0,
            zf[0] - x_obs(tf, d, p) - ap.end_offset,
            zf[2] - 0.0,
            zf[4] - 0.0,
        ])

    def b_jac(z0, zf, tf, s, p):
        nb = 8
        d_z0 = np.zeros((nb, nz))
        d_zf = np.zeros((nb, nz))
        for r, i in enumerate(range(5)):
            d_z0[r, i] = 1.0
        d_zf[5, 0] = 1.0
        d_zf[6, 2] = 1.0
        d_zf[7, 4] = 1.0
        d_tf = np.zeros(nb)
        d_tf[5] = -p[1] * vc
        d_s = np.zeros((nb, 1))
        d_s[5, 0] = -1.0
        return d_z0, d_zf, d_tf, d_s

    mayer = Mayer(value=lambda zfv, tf, s, p: s[0],
                  grad_zf=lambda zfv, tf, s, p: np.zeros(nz),
                  grad_tf=lambda zfv, tf, s, p: 0.0,
                  grad_s=lambda zfv, tf, s, p: np.ones(1))

    return OcpProblem(
        dynamics=dyn,
        t0=0.0,
        tf=FreeTime(guess=1.5, lower=0.2, upper=10.0),
        mayer=mayer,
        lagrange=control_energy([18.0, 0.0]),       # 18 * integral of w^2
        path=[obstacle],
        boundary=BoundaryCondition(nb=8, value=b_value, jac=b_jac),
        u_lower=np.array([-0.5, -10.0]),
        u_upper=np.array([0.5, 0.5]),
        z_lower=np.array([-np.inf, -np.inf, -np.inf, -np.inf, -math.pi / 6]),
        z_upper=np.array([np.inf, ap.road_width - half_b, np.inf, np.inf, math.pi / 6]),
        statics=[StaticVar("standoff", guess=25.0, lower=0.0, upper=200.0)],
        p=np.asarray(p, dtype=float),
        z0_guess=np.array([0.0, ap.y0, 0.0, ap.v0, 0.0]),
        zf_guess=np.array([28.0, ap.y0, 0.0, ap.v0 - 10.0, 0.0]),
    )


# --- tuned solution drivers -------------------------------------------------------

def _soft_terminal(problem: OcpProblem, tf_fix: float, weight: float) -> OcpProblem:
    """Continuation stage: fixed horizon, terminal equalities replaced by a
    quadratic penalty toward zf_guess, mild control regularization."""
    nz = problem.nz
    zf = np.asarray(problem.zf_guess, dtype=float)
    W = np.full(nz, weight)
    soft = copy.copy(problem)
    soft.tf = tf_fix
    soft.boundary = fixed_boundary(dict(enumerate(problem.z0_guess)), {}, nz)
    soft.mayer = Mayer(value=lambda z, tf, s, p: float(W @ (z - zf) ** 2),
                       grad_zf=lambda z, tf, s, p: 2 * W * (z - zf),
                       grad_tf=lambda z, tf, s, p: 0.0,
                       grad_s=lambda z, tf, s, p: np.zeros(len(s)))
    soft.lagrange = control_energy(np.ones(problem.nu))
    soft.statics = []
    return soft


def solve_parking(n_final: int = 101, scheme: str = "rk4", n_coarse: int = 21,
                  horizon_factors=(1.6, 1.0, 1.3, 2.0)):
    """Solve the parking maneuver from the straight-line guess.

    The free-time problem is badly nonconvex from a cold start and owns at
    least two local optima (a slow low-steering maneuver and
    a faster one that works the steering harder).  The driver therefore runs
    a fixed continuation schedule: soft-terminal stages on a coarse grid, a
    steering-weight ladder that settles into the low-steering basin, then
    mesh refinement with midpoint path enforcement so the maneuver cannot
    cut the lot boundary between grid nodes.  Returns
    (OcpSolution, NlpProblem, NlpResult).
    """
    from . import build_solution, refine_guess  # local import: cycle with __init__
    from .solver import SolveOptions, solve_nlp
    from .transcribe import discretize

    problem = parking_problem()
    t_guess = problem.tf.guess
    disc_c = Discretization(n_nodes=n_coarse, scheme=scheme)
    nlp_c = discretize(problem, disc_c)

    coarse = None
    for factor in horizon_factors:
        tf_fix = factor * t_guess
        x = None
        for weight in (50.0, 1000.0):
            soft = _soft_terminal(problem, tf_fix, weight)
            nlp_s = discretize(soft, disc_c)
            res_s = solve_nlp(nlp_s, x if x is not None else nlp_s.make_guess(),
                              SolveOptions(polish=False, max_iter=200))
            x = res_s.x
        Z, U, _, _ = nlp_s.unpack(x)
        x = nlp_c.pack(Z, U, tf_fix, np.zeros(0))
        # steering-weight continuation keeps the low-steering basin
        ok = True
        for beta in (8.0, 3.0, 1.0):
            prob_b = copy.copy(problem)
            prob_b.lagrange = control_energy([beta, 0.0])
            nlp_b = discretize(prob_b, disc_c)
            res = solve_nlp(nlp_b, x, SolveOptions(max_iter=200))
            x = res.x
            ok = ok and res.feasibility < 1e-8
        if ok:
            coarse = res
            break
    if coarse is None:
        raise RuntimeError("parking continuation failed on every horizon")

    res, nlp = coarse, nlp_c
    ladder = [41, 101, 201, 401]
    grids = [g for g in ladder if n_coarse < g < n_final]
    if n_final > n_coarse:
        grids.append(n_final)
    for n in grids:
        mid = n > 41            # midpoint rows once the sag is small enough
        nlp_f = discretize(problem, Discretization(n_nodes=n, scheme=scheme,
                                                   path_midpoints=mid))
        res = solve_nlp(nlp_f, refine_guess(nlp, res.x, nlp_f), SolveOptions())
        nlp = nlp_f
    return build_solution(nlp, res), nlp, res


def _refinement_grids(n_coarse: int, n_final: int):
    grids = []
    n = n_coarse
    while n < n_final:
        n = min(2 * n - 1, n_final)
        grids.append(n)
    return grids


def solve_avoidance(p=(0.0, 0.0), n_final: int = 51, scheme: str = "rk4",
                    n_coarse: int = 26, params: AvoidanceParams = AvoidanceParams(),
                    x0=None):
    """Solve the avoidance maneuver; cold start on a coarse grid, then refine.

    An `x0` sized for the final grid skips the coarse ladder entirely (used
    by re-solves under perturbed parameters).
    """
    from . import build_solution, refine_guess
    from .solver import SolveOptions, solve_nlp
    from .transcribe import discretize

    problem = avoidance_problem(p, params)
    nlp_final = discretize(problem, Discretization(n_nodes=n_final, scheme=scheme))
    if x0 is not None and len(x0) == nlp_final.n_vars:
        res = solve_nlp(nlp_final, x0, SolveOptions())
        return build_solution(nlp_final, res), nlp_final, res

    nlp = discretize(problem, Discretization(n_nodes=min(n_coarse, n_final), scheme=scheme))
    res = solve_nlp(nlp, x0 if x0 is not None else nlp.make_guess(), SolveOptions())
    for n in _refinement_grids(min(n_coarse, n_final), n_final):
        nlp_f = discretize(problem, Discretization(n_nodes=n, scheme=scheme))
        res = solve_nlp(nlp_f, refine_guess(nlp, res.x, nlp_f), SolveOptions())
        nlp = nlp_f
    return build_solution(nlp, res), nlp, res
