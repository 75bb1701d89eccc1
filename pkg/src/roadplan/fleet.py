"""Distributed hierarchical MPC for communicating vehicles.

Round structure (synchronous, one control interval tau per round):

1.  read current states;
2a. every networked vehicle solves its local optimal control problem on
    [t, t+T] against the *previous* round's neighborhoods, priorities and
    plan messages, in parallel over an immutable snapshot;
2b. neighborhoods are reset and recomputed, fresh plans are broadcast;
2c. priorities are reset and reassigned by the rule list;
3.  the first tau seconds of each computed control are applied and the true
    states advance by integration.

Priority rules (first applicable wins, evaluated per neighbor pair):
"external" (non-networked traffic outranks everything), "right_of_way"
(crossing paths: the vehicle coming from the other's right goes first),
"adjoint" (larger control-bound multipliers of the last local solve mean a
costlier deviation, so that vehicle goes first), "id" (deterministic
tie-break).  Lower-priority vehicles carry ellipsoidal avoidance constraints
against every higher-priority neighbor's predicted motion; higher-priority
vehicles ignore lower ones.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import ocp
from .collision import ConvexPolyhedron, Ellipse, ellipse_constraint
from .dynamics import ModelVariant, VehicleParams, VehicleState
from .errors import MissingPlan
from .geometry import CubicSpline

DEFAULT_RULES = ("external", "right_of_way", "adjoint", "id")


def fleet_params() -> VehicleParams:
    """Common vehicle limits used by the multi-vehicle experiments."""
    return VehicleParams(wheelbase=4.0, width=2.0, v_min=1.0, v_max=10.0,
                         delta_max=math.pi / 6, a_min=-10.0, a_max=1.5,
                         w_max=0.5)


@dataclass(frozen=True)
class FleetVehicle:
    vid: int
    initial: VehicleState
    target: Tuple[float, float]
    params: VehicleParams = field(default_factory=fleet_params)
    r_x: float = 3.5                 # safety ellipse half radii [m]
    r_y: float = 2.5
    networked: bool = True           # non-networked traffic never plans


@dataclass(frozen=True)
class FleetScenario:
    vehicles: Sequence[FleetVehicle]
    road: Optional[ConvexPolyhedron] = None          # None = unbounded plane
    obstacles: Sequence[Ellipse] = ()                # static safety ellipses
    horizon: float = 2.0                             # T [s]
    control_interval: float = 0.1                    # tau [s]
    comm_radius: float = 30.0
    alpha: Tuple[float, float, float] = (1.0, 1.0, 10.0)
    rules: Tuple[str, ...] = DEFAULT_RULES
    n_nodes: int = 21
    goal_tol: float = 0.5
    time_limit: float = 60.0

    def __post_init__(self):
        if not (self.horizon > self.control_interval > 0):
            raise ValueError("need horizon > control_interval > 0")
        if self.comm_radius <= 0:
            raise ValueError("communication radius must be positive")
        ids = [v.vid for v in self.vehicles]
        if len(ids) != len(set(ids)):
            raise ValueError("vehicle ids must be unique")


@dataclass(frozen=True)
class PlanMessage:
    sender: int
    t0: float
    times: np.ndarray            # (n,)
    states: np.ndarray           # (n, 5)

    def state_at(self, t: float) -> np.ndarray:
        t = min(max(t, self.times[0]), self.times[-1])   # hold ends
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = max(0, min(i, len(self.times) - 2))
        span = self.times[i + 1] - self.times[i]
        lam = 0.0 if span == 0 else (t - self.times[i]) / span
        return (1 - lam) * self.states[i] + lam * self.states[i + 1]

    def states_at(self, tt) -> np.ndarray:
        return np.array([self.state_at(t) for t in np.atleast_1d(tt)])


def vehicle_center(state, ell: float) -> np.ndarray:
    x, y, psi = state[0], state[1], state[2]
    return np.array([x + 0.5 * ell * math.cos(psi), y + 0.5 * ell * math.sin(psi)])


@dataclass
class PrioritySets:
    i_nh: Dict[int, Set[int]]
    i_pr: Dict[int, Set[int]]
    rule_used: Dict[Tuple[int, int], str] = field(default_factory=dict)

    def rank(self, vid: int) -> int:
        """Number of higher-priority neighbors (0 = top of the local order)."""
        return len(self.i_pr[vid])


def neighborhoods(centers: Dict[int, np.ndarray], radius: float) -> Dict[int, Set[int]]:
    """Symmetric neighbor sets on center-to-center Euclidean distance."""
    ids = sorted(centers)
    nh: Dict[int, Set[int]] = {i: set() for i in ids}
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            if np.linalg.norm(centers[i] - centers[j]) <= radius:
                nh[i].add(j)
                nh[j].add(i)
    return nh


def _conflict_zone(plan_i: PlanMessage, plan_j: PlanMessage, dist: float):
    """Closest predicted approach; returns the conflict point or None."""
    tt = np.linspace(max(plan_i.times[0], plan_j.times[0]),
                     min(plan_i.times[-1], plan_j.times[-1]), 11)
    pi = plan_i.states_at(tt)[:, :2]
    pj = plan_j.states_at(tt)[:, :2]
    gaps = np.linalg.norm(pi - pj, axis=1)
    k = int(np.argmin(gaps))
    if gaps[k] > dist:
        return None
    return 0.5 * (pi[k] + pj[k])


def assign_priorities(scenario: FleetScenario, states: Dict[int, np.ndarray],
                      plans: Dict[int, PlanMessage],
                      i_nh: Dict[int, Set[int]],
                      bound_multiplier_norms: Dict[int, float],
                      row_memory: Optional[Dict[Tuple[int, int], int]] = None
                      ) -> PrioritySets:
    """Pairwise hierarchy per neighbor pair, first applicable rule wins.

    `row_memory` carries committed right-of-way decisions between rounds: a
    crossing conflict is ranked once on the approach and the assignment
    holds while the predicted conflict persists (turning through the
    intersection must not re-litigate who yields).
    """
    by_id = {v.vid: v for v in scenario.vehicles}
    i_pr: Dict[int, Set[int]] = {i: set() for i in i_nh}
    rule_used = {}
    memory = row_memory if row_memory is not None else {}

    def right_of_way(i, j, cp):
        """+1 if i outranks j (i approaches the conflict from j's right),
        -1 the other way, 0 when not applicable.  Uses approach bearings
        toward the conflict point rather than instantaneous headings, so a
        car mid-turn does not re-rank traffic it already yielded to."""
        hi = np.array([math.cos(states[i][2]), math.sin(states[i][2])])
        hj = np.array([math.cos(states[j][2]), math.sin(states[j][2])])
        bi = cp - states[i][:2]
        bj = cp - states[j][:2]
        ni, nj = np.linalg.norm(bi), np.linalg.norm(bj)
        if ni < 1e-6 or nj < 1e-6:
            return 0
        bi, bj = bi / ni, bj / nj
        if hi @ bi <= 0.0 or hj @ bj <= 0.0:
            return 0      # somebody is already past the conflict point
        cross = bj[0] * bi[1] - bj[1] * bi[0]     # cross(b_j, b_i)
        if abs(cross) < 0.5:
            return 0      # near-parallel traffic: not a crossing situation
        return 1 if cross > 0 else -1

    for i in sorted(i_nh):
        for j in sorted(i_nh[i]):
            if j <= i:
                continue
            cp = None
            if i in plans and j in plans:
                cp = _conflict_zone(plans[i], plans[j],
                                    by_id[i].r_x + by_id[j].r_x)
            if cp is None:
                memory.pop((i, j), None)
            elif (i, j) in memory:
                # an order decided while in conflict holds until the
                # conflict clears; yielding must not re-rank the pair
                outcome = memory[(i, j)]
                if outcome > 0:
                    i_pr[j].add(i)
                else:
                    i_pr[i].add(j)
                rule_used[(i, j)] = "committed"
                continue

            outcome = 0
            rule_name = "id"
            for rule in scenario.rules:
                if rule == "external":
                    net_i, net_j = by_id[i].networked, by_id[j].networked
                    if net_i != net_j:
                        outcome = 1 if not net_i else -1
                        rule_name = "external"
                        break
                elif rule == "right_of_way":
                    if cp is not None:
                        row = right_of_way(i, j, cp)
                        if row != 0:
                            outcome = row
                            rule_name = "right_of_way"
                            break
                elif rule == "adjoint":
                    # a 10% relative deadband keeps the order from flapping
                    # while a yielding vehicle's multipliers swell
                    mi = bound_multiplier_norms.get(i, 0.0)
                    mj = bound_multiplier_norms.get(j, 0.0)
                    if abs(mi - mj) > 0.1 * max(mi, mj, 1e-9):
                        outcome = 1 if mi > mj else -1
                        rule_name = "adjoint"
                        break
                elif rule == "id":
                    outcome = 1
                    rule_name = "id"
                    break
            if outcome == 0:
                outcome = 1
            if cp is not None:
                memory[(i, j)] = outcome
            if outcome > 0:
                i_pr[j].add(i)          # i has higher priority than j
            else:
                i_pr[i].add(j)
            rule_used[(i, j)] = rule_name
    return PrioritySets(i_nh=i_nh, i_pr=i_pr, rule_used=rule_used)


# --- local optimal control problems ----------------------------------------------

ELLIPSE_MARGIN = 0.015      # tightening of the >= 1 ellipse constraint; keeps
# the continuous-time value above 1 - 1e-3 between the sampled grid points


def _ellipse_path_constraint(my_ell: float, ref_times: np.ndarray,
                             centers: np.ndarray, psis: np.ndarray,
                             r_x: float, r_y: float,
                             margin: float = ELLIPSE_MARGIN) -> ocp.PathConstraint:
    """(1 + margin) - (c(t) - c_k(t))^T Q_k(t) (c(t) - c_k(t)) <= 0.

    The neighbor motion (ref_times, centers, psis) is interpolated at the
    requested constraint times, so grid and midpoint evaluations see the
    neighbor where it actually is.
    """
    inv2 = np.array([1.0 / r_x ** 2, 1.0 / r_y ** 2])
    half = 0.5 * my_ell

    def neighbor_at(tt):
        tt = np.clip(tt, ref_times[0], ref_times[-1])
        cx = np.interp(tt, ref_times, centers[:, 0])
        cy = np.interp(tt, ref_times, centers[:, 1])
        ps = np.interp(tt, ref_times, psis)
        cos_k, sin_k = np.cos(ps), np.sin(ps)
        Q = np.zeros((len(tt), 2, 2))
        Q[:, 0, 0] = inv2[0] * cos_k ** 2 + inv2[1] * sin_k ** 2
        Q[:, 1, 1] = inv2[0] * sin_k ** 2 + inv2[1] * cos_k ** 2
        Q[:, 0, 1] = Q[:, 1, 0] = (inv2[0] - inv2[1]) * sin_k * cos_k
        return np.stack([cx, cy], axis=-1), Q

    def my_center(Z):
        return np.stack([Z[:, 0] + half * np.cos(Z[:, 2]),
                         Z[:, 1] + half * np.sin(Z[:, 2])], axis=-1)

    def value(tt, Z, s, p):
        C, Q = neighbor_at(np.asarray(tt, dtype=float))
        d = my_center(Z) - C
        return ((1.0 + margin) - np.einsum("ni,nij,nj->n", d, Q, d))[:, None]

    def jac(tt, Z, s, p):
        C, Q = neighbor_at(np.asarray(tt, dtype=float))
        d = my_center(Z) - C
        Qd = np.einsum("nij,nj->ni", Q, d)
        dZ = np.zeros((Z.shape[0], 1, Z.shape[1]))
        dZ[:, 0, 0] = -2.0 * Qd[:, 0]
        dZ[:, 0, 1] = -2.0 * Qd[:, 1]
        dc_dpsi = np.stack([-half * np.sin(Z[:, 2]), half * np.cos(Z[:, 2])], axis=-1)
        dZ[:, 0, 2] = -2.0 * np.einsum("ni,ni->n", Qd, dc_dpsi)
        return dZ, np.zeros((Z.shape[0], 1, len(s))), np.zeros((Z.shape[0], 1))

    return ocp.PathConstraint(ng=1, value=value, jac=jac, label="ellipse")


def _road_constraint(road: ConvexPolyhedron, nz: int) -> ocp.PathConstraint:
    C, d = road.C, road.d

    def value(tt, Z, s, p):
        return Z[:, :2] @ C.T - d

    def jac(tt, Z, s, p):
        n = Z.shape[0]
        dZ = np.zeros((n, len(d), nz))
        dZ[:, :, 0] = C[:, 0]
        dZ[:, :, 1] = C[:, 1]
        return dZ, np.zeros((n, len(d), len(s))), np.zeros((n, len(d)))

    return ocp.PathConstraint(ng=len(d), value=value, jac=jac, label="road")


def local_ocp(vehicle: FleetVehicle, scenario: FleetScenario, t_i: float,
              state: np.ndarray, plans: Dict[int, PlanMessage],
              i_pr: Set[int]) -> ocp.OcpProblem:
    """The vehicle's receding-horizon problem at sampling time t_i."""
    a1, a2, a3 = scenario.alpha
    par = vehicle.params
    dyn = ocp.Rate5Dynamics(par.wheelbase)
    target = np.asarray(vehicle.target, dtype=float)
    by_id = {v.vid: v for v in scenario.vehicles}

    def mayer_val(zf, tf, s, p):
        return a1 * float((zf[0] - target[0]) ** 2 + (zf[1] - target[1]) ** 2)

    def mayer_gzf(zf, tf, s, p):
        g = np.zeros(5)
        g[0] = 2 * a1 * (zf[0] - target[0])
        g[1] = 2 * a1 * (zf[1] - target[1])
        return g

    mayer = ocp.Mayer(value=mayer_val, grad_zf=mayer_gzf,
                      grad_tf=lambda *a: 0.0, grad_s=lambda *a: np.zeros(0))

    tt = t_i + np.linspace(0.0, scenario.horizon, scenario.n_nodes)
    path = []
    for k in sorted(i_pr):
        if k not in plans:
            raise MissingPlan(f"vehicle {vehicle.vid} lacks a plan from {k}")
        other = by_id[k]
        zs = plans[k].states_at(tt)
        centers = np.stack([vehicle_center(z, other.params.wheelbase) for z in zs])
        path.append(_ellipse_path_constraint(par.wheelbase, tt, centers, zs[:, 2],
                                             other.r_x, other.r_y))
    for el in scenario.obstacles:
        centers = np.repeat(el.center[None, :], len(tt), axis=0)
        path.append(_ellipse_path_constraint(par.wheelbase, tt, centers,
                                             np.full(len(tt), el.psi), el.r_x, el.r_y))
    if scenario.road is not None:
        path.append(_road_constraint(scenario.road, 5))

    heading = np.array([math.cos(state[2]), math.sin(state[2])])
    zf_guess = state.copy()
    zf_guess[:2] = state[:2] + state[3] * scenario.horizon * heading

    return ocp.OcpProblem(
        dynamics=dyn,
        t0=t_i,
        tf=t_i + scenario.horizon,
        mayer=mayer,
        lagrange=ocp.control_energy([a3, a2]),      # u = (w, a)
        path=path,
        boundary=ocp.fixed_boundary(dict(enumerate(state)), {}, 5),
        u_lower=np.array([-par.w_max, par.a_min]),
        u_upper=np.array([par.w_max, par.a_max]),
        z_lower=np.array([-np.inf, -np.inf, -np.inf, par.v_min, -par.delta_max]),
        z_upper=np.array([np.inf, np.inf, np.inf, par.v_max, par.delta_max]),
        z0_guess=state.copy(),
        zf_guess=zf_guess,
    )


# --- simulation ------------------------------------------------------------------

@dataclass
class RoundLog:
    round: int
    t: float
    vid: int
    solve_status: str
    priority_rank: int
    min_ellipse_value: float


@dataclass
class FleetResult:
    times: np.ndarray
    trajectories: Dict[int, np.ndarray]         # vid -> (n, 5)
    logs: List[RoundLog]
    priorities_history: List[PrioritySets]
    reached: Dict[int, bool]
    min_pair_clearance: float                   # min ellipse value over run


def _integrate_rate5(state, u, ell, dt, substeps=2):
    z = state.copy()
    h = dt / substeps
    for _ in range(substeps):
        def rhs(zz):
            return np.array([zz[3] * math.cos(zz[2]), zz[3] * math.sin(zz[2]),
                             zz[3] / ell * math.tan(zz[4]), u[1], u[0]])
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * h * k1)
        k3 = rhs(z + 0.5 * h * k2)
        k4 = rhs(z + h * k3)
        z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return z


class FleetSimulator:
    """Round-synchronous world; per-round solves read an immutable snapshot."""

    def __init__(self, scenario: FleetScenario):
        self.scenario = scenario
        self.by_id = {v.vid: v for v in scenario.vehicles}
        self.t = 0.0
        self.round = 0
        self._fallback_controls: Dict[int, np.ndarray] = {}
        self._row_memory: Dict[Tuple[int, int], int] = {}
        self.states: Dict[int, np.ndarray] = {
            v.vid: v.initial.as_array(ModelVariant.RATE5) for v in scenario.vehicles}
        self.done: Dict[int, bool] = {v.vid: not v.networked for v in scenario.vehicles}
        self.plans: Dict[int, PlanMessage] = {}
        self.mult_norms: Dict[int, float] = {}
        self.prev_solutions: Dict[int, ocp.OcpSolution] = {}
        self.logs: List[RoundLog] = []
        self.history: Dict[int, List[np.ndarray]] = {v.vid: [self.states[v.vid].copy()]
                                                     for v in scenario.vehicles}
        self.time_history = [0.0]
        self.priorities_history: List[PrioritySets] = []
        self.min_pair_clearance = math.inf

        # bootstrap: solo plans (no coupling), then initial relations
        for v in scenario.vehicles:
            if v.networked:
                self._solve_vehicle(v, set(), {})
            else:
                self.plans[v.vid] = self._static_plan(v.vid)
        self._update_relations()

    # -- helpers -------------------------------------------------------------

    def _static_plan(self, vid: int) -> PlanMessage:
        tt = self.t + np.linspace(0.0, self.scenario.horizon, self.scenario.n_nodes)
        states = np.repeat(self.states[vid][None, :], len(tt), axis=0)
        return PlanMessage(sender=vid, t0=self.t, times=tt, states=states)

    def _braking_plan(self, vid: int) -> Tuple[PlanMessage, np.ndarray]:
        """Fallback: maximum deceleration (respecting v_min), zero steering."""
        v = self.by_id[vid]
        sc = self.scenario
        tt = self.t + np.linspace(0.0, sc.horizon, sc.n_nodes)
        z = self.states[vid].copy()
        states = [z.copy()]
        for i in range(len(tt) - 1):
            dt = tt[i + 1] - tt[i]
            a = v.params.a_min if z[3] > v.params.v_min else 0.0
            z = _integrate_rate5(z, np.array([0.0, a]), v.params.wheelbase, dt)
            z[3] = max(z[3], v.params.v_min)
            states.append(z.copy())
        return PlanMessage(vid, self.t, tt, np.array(states)), np.array([0.0, v.params.a_min])

    def _shift_guess(self, vid: int, nlp: ocp.NlpProblem):
        """Warm start from the previous solution shifted by one interval."""
        sol = self.prev_solutions.get(vid)
        if sol is None:
            return None
        U = np.vstack([sol.controls[1:], sol.controls[-1:]])
        from roadplan.ocp.condense import CondensedNlp
        c = CondensedNlp(nlp)
        return c.to_full(c.pack(self.states[vid], U, nlp.problem.tf - nlp.problem.t0,
                                np.zeros(0)))

    def _solve_vehicle(self, vehicle: FleetVehicle, i_pr: Set[int],
                       plans: Dict[int, PlanMessage]) -> str:
        problem = local_ocp(vehicle, self.scenario, self.t, self.states[vehicle.vid],
                            plans, i_pr)
        nlp = ocp.discretize(problem, ocp.Discretization(n_nodes=self.scenario.n_nodes,
                                                         path_midpoints=True))
        x0 = self._shift_guess(vehicle.vid, nlp)
        opts = ocp.SolveOptions(max_iter=120, polish=False, condense=False,
                                act_tol=1e-7)
        res = ocp.solve_nlp(nlp, x0 if x0 is not None else nlp.make_guess(), opts)
        ok = res.feasibility < 1e-5 and res.status != "infeasible"
        if ok:
            sol = ocp.build_solution(nlp, res)
            self.prev_solutions[vehicle.vid] = sol
            self.plans[vehicle.vid] = PlanMessage(vehicle.vid, self.t, sol.times,
                                                  sol.states)
            mu = np.concatenate([res.mu_lower[nlp.u_index.ravel()],
                                 res.mu_upper[nlp.u_index.ravel()]])
            self.mult_norms[vehicle.vid] = float(np.max(np.abs(mu), initial=0.0))
            return "converged"
        plan, u_brake = self._braking_plan(vehicle.vid)
        self.plans[vehicle.vid] = plan
        self.prev_solutions.pop(vehicle.vid, None)
        self._fallback_controls[vehicle.vid] = u_brake
        return "braking_fallback"

    def _update_relations(self):
        centers = {v.vid: vehicle_center(self.states[v.vid], v.params.wheelbase)
                   for v in self.scenario.vehicles}
        i_nh = neighborhoods(centers, self.scenario.comm_radius)
        self.priorities = assign_priorities(self.scenario, self.states, self.plans,
                                            i_nh, self.mult_norms,
                                            row_memory=self._row_memory)
        self.priorities_history.append(self.priorities)

    # -- one MPC round ---------------------------------------------------------

    def step(self):
        sc = self.scenario
        self._fallback_controls: Dict[int, np.ndarray] = {}
        active = [v for v in sc.vehicles if v.networked and not self.done[v.vid]]

        # 2a: parallel solves against the previous round's relations/plans
        snapshot_plans = dict(self.plans)
        snapshot_pr = {v.vid: set(self.priorities.i_pr[v.vid]) for v in active}
        statuses: Dict[int, str] = {}
        max_workers = int(os.environ.get("ROADPLAN_THREADS", "0")) or None
        if max_workers == 1 or len(active) == 1:
            for v in active:
                statuses[v.vid] = self._solve_vehicle(v, snapshot_pr[v.vid],
                                                      snapshot_plans)
        else:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                futs = {v.vid: pool.submit(self._solve_vehicle, v,
                                           snapshot_pr[v.vid], snapshot_plans)
                        for v in active}
                for vid, fut in futs.items():
                    statuses[vid] = fut.result()

        # 2b + 2c: reset relations, broadcast fresh plans, reassign priorities
        for v in sc.vehicles:
            if not v.networked or self.done[v.vid]:
                self.plans[v.vid] = self._static_plan(v.vid)
        self._update_relations()

        # 3: apply the first control interval and advance the true states
        clearances = {v.vid: math.inf for v in sc.vehicles}
        controls = {}
        for v in active:
            if statuses[v.vid] == "converged":
                controls[v.vid] = self.prev_solutions[v.vid].controls[0]
            else:
                controls[v.vid] = self._fallback_controls[v.vid]
        sub = 5
        snapshot_states = {vid: s.copy() for vid, s in self.states.items()}
        for i in range(sub):
            dt = sc.control_interval / sub
            for v in active:
                self.states[v.vid] = _integrate_rate5(self.states[v.vid],
                                                      controls[v.vid],
                                                      v.params.wheelbase, dt, 1)
            # safety samples at tau/5 against higher-priority ellipses
            for v in sc.vehicles:
                for k in self.priorities.i_pr[v.vid]:
                    other = self.by_id[k]
                    c_j = vehicle_center(self.states[v.vid], v.params.wheelbase)
                    sk = self.states[k]
                    ell_k = Ellipse(center=vehicle_center(sk, other.params.wheelbase),
                                    r_x=other.r_x, r_y=other.r_y, psi=sk[2])
                    val = ellipse_constraint(c_j, ell_k)
                    clearances[v.vid] = min(clearances[v.vid], val)
                    self.min_pair_clearance = min(self.min_pair_clearance, val)

        self.t += sc.control_interval
        self.round += 1
        for v in sc.vehicles:
            self.history[v.vid].append(self.states[v.vid].copy())
        self.time_history.append(self.t)

        for v in sc.vehicles:
            status = statuses.get(v.vid, "idle" if self.done[v.vid] else "external")
            self.logs.append(RoundLog(self.round, self.t, v.vid, status,
                                      self.priorities.rank(v.vid),
                                      clearances[v.vid]))

        # per-vehicle termination: close to the destination
        for v in active:
            pos = self.states[v.vid][:2]
            if np.linalg.norm(pos - np.asarray(v.target)) < sc.goal_tol:
                self.done[v.vid] = True

    def run(self) -> FleetResult:
        sc = self.scenario
        while self.t < sc.time_limit - 1e-9:
            if all(self.done[v.vid] for v in sc.vehicles if v.networked):
                break
            self.step()
        reached = {}
        for v in sc.vehicles:
            pos = self.states[v.vid][:2]
            reached[v.vid] = bool(np.linalg.norm(pos - np.asarray(v.target))
                                  < sc.goal_tol) if v.networked else True
        return FleetResult(
            times=np.array(self.time_history),
            trajectories={vid: np.array(h) for vid, h in self.history.items()},
            logs=self.logs,
            priorities_history=self.priorities_history,
            reached=reached,
            min_pair_clearance=self.min_pair_clearance)


def run_scenario(scenario: FleetScenario) -> FleetResult:
    return FleetSimulator(scenario).run()


# --- spline-following simplification ----------------------------------------------

@dataclass(frozen=True)
class SplineVehicle:
    vid: int
    spline: CubicSpline
    s0: float
    s_target: float
    v_min: float = 1.0
    v_max: float = 10.0


def spline_follow_ocp(vehicle: SplineVehicle, t_i: float, horizon: float,
                      neighbor_plans: Dict[int, Tuple[CubicSpline, "PlanMessage"]],
                      i_pr: Set[int], security_distance: float,
                      n_nodes: int = 21) -> ocp.OcpProblem:
    """Scalar arc-length OCP: s' = v, quadratic terminal miss, pairwise
    curve-distance constraints against higher-priority vehicles.

    `neighbor_plans[k]` carries (spline_k, scalar plan message) where the
    plan's states hold s_k(t) in column 0.
    """
    target = vehicle.s_target
    spline = vehicle.spline

    mayer = ocp.Mayer(
        value=lambda zf, tf, s, p: 0.5 * float((zf[0] - target) ** 2),
        grad_zf=lambda zf, tf, s, p: np.array([zf[0] - target]),
        grad_tf=lambda *a: 0.0,
        grad_s=lambda zf, tf, s, p: np.zeros(0))

    tt = t_i + np.linspace(0.0, horizon, n_nodes)
    path = []
    for k in sorted(i_pr):
        if k not in neighbor_plans:
            raise MissingPlan(f"vehicle {vehicle.vid} lacks a plan from {k}")
        spline_k, plan_k = neighbor_plans[k]
        sk = plan_k.states_at(tt)[:, 0]
        pk = spline_k.eval(np.clip(sk, 0.0, spline_k.length))
        r2 = security_distance ** 2

        def value(ttv, Z, s, p, pk=pk):
            n = min(Z.shape[0], len(pk))
            pj = spline.eval(np.clip(Z[:n, 0], 0.0, spline.length))
            g = r2 - np.sum((pj - pk[:n]) ** 2, axis=1)
            if Z.shape[0] > n:
                pj2 = spline.eval(np.clip(Z[n:, 0], 0.0, spline.length))
                g = np.concatenate([g, r2 - np.sum((pj2 - pk[-1]) ** 2, axis=1)])
            return g[:, None]

        def jac(ttv, Z, s, p, pk=pk):
            nfull = Z.shape[0]
            n = min(nfull, len(pk))
            P = np.vstack([pk[:n], np.repeat(pk[-1:], nfull - n, axis=0)])
            sj = np.clip(Z[:, 0], 0.0, spline.length)
            pj = spline.eval(sj)
            dj = spline.eval_d(sj)
            dZ = (-2.0 * np.sum((pj - P) * dj, axis=1))[:, None, None]
            return dZ, np.zeros((nfull, 1, len(s))), np.zeros((nfull, 1))

        path.append(ocp.PathConstraint(ng=1, value=value, jac=jac, label="curve_sep"))

    return ocp.OcpProblem(
        dynamics=ocp.ScalarSpeedDynamics(),
        t0=t_i,
        tf=t_i + horizon,
        mayer=mayer,
        path=path,
        boundary=ocp.fixed_boundary({0: vehicle.s0}, {}, 1),
        u_lower=np.array([vehicle.v_min]),
        u_upper=np.array([vehicle.v_max]),
        z0_guess=np.array([vehicle.s0]),
        zf_guess=np.array([min(vehicle.s0 + vehicle.v_max * horizon, target)]),
    )
