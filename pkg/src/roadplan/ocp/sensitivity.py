"""Parametric sensitivities by differentiating the KKT system.

At a converged solution with a fixed active set, the KKT conditions define
(x, multipliers) implicitly as functions of the problem parameters p.
Differentiating yields one bordered linear solve per parameter:

    [ H      J_act^T ] [ dx/dp  ]     [ d(grad L)/dp ]
    [ J_act     0    ] [ dlam/dp] = - [ dc_act/dp    ]

Weakly active rows (multiplier below `strict_tol`) violate the strict
complementarity assumption; they are dropped by default (giving the
one-sided derivative) or reported as ActiveSetDegenerate on request.
"""

from __future__ import annotations

import copy

import numpy as np

from ..errors import ActiveSetDegenerate, SingularKktMatrix
from .problem import ConvergenceReport, OcpSolution, SensitivityData
from .solver import ActiveSet, NlpResult, _active_rows, lagrangian_hessian
from .transcribe import NlpProblem


def _reduced_active(nlp, res: NlpResult, strict_tol, on_degenerate) -> ActiveSet:
    act = res.active
    lb, ub = nlp.bounds()
    weak_in = [i for i in act.ineq if abs(res.mu_ineq[i]) < strict_tol]
    weak_lo = [i for i in act.lower if abs(res.mu_lower[i]) < strict_tol
               and not np.isclose(lb[i], ub[i])]
    weak_up = [i for i in act.upper if abs(res.mu_upper[i]) < strict_tol]
    if (weak_in or weak_lo or weak_up) and on_degenerate == "raise":
        raise ActiveSetDegenerate(
            f"{len(weak_in) + len(weak_lo) + len(weak_up)} active rows with "
            f"multipliers below {strict_tol}")
    return ActiveSet(ineq=np.setdiff1d(act.ineq, weak_in),
                     lower=np.setdiff1d(act.lower, weak_lo),
                     upper=np.setdiff1d(act.upper, weak_up))


def sensitivities(nlp: NlpProblem, res: NlpResult, strict_tol: float = 1e-6,
                  on_degenerate: str = "drop", fd_eps: float = 1e-6) -> SensitivityData:
    p_star = nlp.problem.p.copy()
    n_p = len(p_star)
    x = res.x
    lb, ub = nlp.bounds()
    act = _reduced_active(nlp, res, strict_tol, on_degenerate)

    A, _ = _active_rows(nlp, x, act, lb, ub)
    m = A.shape[0]
    lam, *_ = np.linalg.lstsq(A.T, -nlp.gradient(x), rcond=None) if m else (np.zeros(0),)
    mu_act = lam[nlp.me:nlp.me + len(act.ineq)] if len(act.ineq) else np.zeros(0)
    H = lagrangian_hessian(nlp, x, lam[:nlp.me], mu_act, act.ineq)

    n = nlp.n_vars
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A

    def grad_l_at(p):
        nlp_p = nlp.with_params(p)
        g = nlp_p.gradient(x)
        if nlp.me:
            g = g + nlp_p.eq_jacobian(x).T @ lam[:nlp.me]
        if len(act.ineq):
            g = g + nlp_p.ineq_jacobian(x)[act.ineq].T @ mu_act
        return g

    def c_at(p):
        nlp_p = nlp.with_params(p)
        return _active_rows(nlp_p, x, act, lb, ub)[1]

    def lagr_value_at(p):
        nlp_p = nlp.with_params(p)
        val = nlp_p.objective(x)
        if m:
            val += float(lam @ _active_rows(nlp_p, x, act, lb, ub)[1])
        return val

    rhs = np.zeros((n + m, n_p))
    dJ = np.zeros(n_p)
    for j in range(n_p):
        h = fd_eps * (1.0 + abs(p_star[j]))
        pp, pm = p_star.copy(), p_star.copy()
        pp[j] += h
        pm[j] -= h
        rhs[:n, j] = -(grad_l_at(pp) - grad_l_at(pm)) / (2 * h)
        rhs[n:, j] = -(c_at(pp) - c_at(pm)) / (2 * h)
        dJ[j] = (lagr_value_at(pp) - lagr_value_at(pm)) / (2 * h)

    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularKktMatrix(str(exc)) from exc
    dx_dp = sol[:n]

    dz_dp = dx_dp[nlp.z_index]                       # (N, nz, n_p)
    du_dp = dx_dp[nlp.u_index] if nlp.nu else np.zeros((nlp.N - 1, 0, n_p))
    # the horizon variable is stored scaled; report the physical d tf/dp
    dtf_dp = dx_dp[nlp.sigma_index] * nlp.tf_scale if nlp.free_time else np.zeros(n_p)
    ds_dp = dx_dp[nlp.s_index] if nlp.ns else np.zeros((0, n_p))
    return SensitivityData(p_star=p_star, dx_dp=dx_dp, dz_dp=dz_dp, du_dp=du_dp,
                           dtf_dp=np.atleast_1d(dtf_dp), dstatics_dp=ds_dp,
                           dobjective_dp=dJ)


def taylor_update(solution: OcpSolution, sens: SensitivityData, p) -> OcpSolution:
    """First-order prediction of the solution at parameters p (no feasibility
    guarantee; large steps or active-set changes invalidate it)."""
    dp = np.asarray(p, dtype=float) - sens.p_star
    predicted = copy.deepcopy(solution)
    predicted.x = solution.x + sens.dx_dp @ dp
    predicted.states = solution.states + sens.dz_dp @ dp
    predicted.controls = solution.controls + sens.du_dp @ dp
    predicted.tf = float(solution.tf + sens.dtf_dp @ dp)
    predicted.statics = solution.statics + sens.dstatics_dp @ dp
    predicted.objective = float(solution.objective + sens.dobjective_dp @ dp)
    if len(solution.times) > 1:
        predicted.times = solution.times * (predicted.tf / solution.tf) \
            if solution.tf else solution.times
    predicted.report = ConvergenceReport(
        status="taylor-prediction", backend="taylor", iterations=0,
        polish_iterations=0, kkt_stationarity=float("nan"),
        kkt_feasibility=float("nan"), kkt_complementarity=float("nan"),
        message=f"first-order update from p* = {sens.p_star.tolist()}")
    return predicted
