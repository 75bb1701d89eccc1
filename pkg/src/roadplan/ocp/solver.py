"""NLP solution machinery: SQP globalization plus Newton-KKT refinement.

A discretized problem is first driven close to a KKT point by scipy's SLSQP
(an SQP method with dense least-squares subproblems), then polished by an
active-set Newton iteration on the KKT equations.  The polish fixes the
active bounds/inequalities, solves the bordered system

    [ H   J_act^T ] [dx]     [ grad L ]
    [ J_act   0  ] [lam]  = -[ c_act  ]

with an exact (finite-differenced, structure-exploiting) Lagrangian Hessian,
and updates the active set on sign violations.  This yields machine-accurate
feasibility, clean multipliers, and the factorizable KKT system that the
parametric sensitivity analysis reuses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .transcribe import NlpProblem


@dataclass
class SolveOptions:
    backend: str = "slsqp"             # "slsqp" | "newton" (polish only)
    max_iter: int = 400
    ftol: float = 1e-12
    polish: bool = True
    polish_max_iter: int = 60
    act_tol: float = 1e-6              # activity detection window
    stat_tol: float = 5e-7
    feas_tol: float = 1e-10
    fd_eps: float = 1e-6
    condense: str | bool = "auto"      # shrink the SQP to control space first
    verbose: bool = False


@dataclass
class ActiveSet:
    ineq: np.ndarray       # indices into c_in rows
    lower: np.ndarray      # variable indices pinned at lb
    upper: np.ndarray      # variable indices pinned at ub


@dataclass
class NlpResult:
    x: np.ndarray
    lam_eq: np.ndarray
    mu_ineq: np.ndarray            # full-length, zero on inactive rows
    mu_lower: np.ndarray           # full-length per variable (>= 0)
    mu_upper: np.ndarray
    active: ActiveSet
    status: str
    iterations: int
    polish_iterations: int
    stationarity: float
    feasibility: float
    complementarity: float
    message: str = ""

    @property
    def success(self) -> bool:
        return self.status == "converged"


def _detect_active(nlp: NlpProblem, x, lb, ub, tol) -> ActiveSet:
    c_in = nlp.ineq_constraints(x)
    act_in = np.flatnonzero(c_in > -tol)
    scale = 1.0 + np.abs(lb)
    act_lo = np.flatnonzero((x - lb) < tol * scale)
    scale = 1.0 + np.abs(ub)
    act_up = np.flatnonzero((ub - x) < tol * scale)
    act_up = np.setdiff1d(act_up, act_lo)      # fixed variables count as lower
    return ActiveSet(ineq=act_in, lower=act_lo, upper=act_up)


def _active_rows(nlp: NlpProblem, x, act: ActiveSet, lb, ub):
    """Stack residuals/jacobian of equalities, active inequalities, active bounds."""
    n = nlp.n_vars
    c_eq = nlp.eq_constraints(x)
    J_eq = nlp.eq_jacobian(x)
    rows = [J_eq]
    vals = [c_eq]
    if len(act.ineq):
        c_in = nlp.ineq_constraints(x)
        J_in = nlp.ineq_jacobian(x)
        rows.append(J_in[act.ineq])
        vals.append(c_in[act.ineq])
    for idx, bound in ((act.lower, lb), (act.upper, ub)):
        if len(idx):
            B = np.zeros((len(idx), n))
            B[np.arange(len(idx)), idx] = 1.0
            rows.append(B)
            vals.append(x[idx] - bound[idx])
    return np.vstack(rows) if rows else np.zeros((0, n)), \
        np.concatenate(vals) if vals else np.zeros(0)


def _grad_lagrangian_fn(nlp: NlpProblem, lam_eq, mu_act, act_ineq):
    """Gradient of f + lam.c_eq + mu.c_act as a function of x (bounds excluded:
    their second derivatives vanish)."""
    mu_full = np.zeros(nlp.mi)
    if len(act_ineq):
        mu_full[act_ineq] = mu_act

    def gradL(x):
        g = nlp.gradient(x)
        if nlp.me:
            g = g + nlp.eq_jac_t_vec(x, lam_eq)
        if len(act_ineq):
            g = g + nlp.ineq_jac_t_vec(x, mu_full)
        return g

    return gradL


def lagrangian_hessian(nlp: NlpProblem, x, lam_eq, mu_act, act_ineq,
                       fd_eps: float = 1e-6) -> np.ndarray:
    """Central-difference Hessian of the Lagrangian, exploiting the
    one-node-per-column sparsity of the transcription."""
    n = nlp.n_vars
    gradL = _grad_lagrangian_fn(nlp, lam_eq, mu_act, act_ineq)
    node = nlp.node_of_var()
    H = np.zeros((n, n))

    border = np.flatnonzero(node < 0)
    blk = nlp.nz + nlp.nu

    def fd_columns(cols):
        v = np.zeros(n)
        hs = fd_eps * (1.0 + np.abs(x[cols]))
        v[cols] = hs
        diff = (gradL(x + v) - gradL(x - v)) / 2.0
        return diff, hs

    # border columns one at a time (they may couple to everything)
    for j in border:
        diff, hs = fd_columns(np.array([j]))
        H[:, j] = diff / hs[0]

    # interior columns grouped by block offset and node phase (mod 3): a
    # column's Hessian rows stay within its node +- 1 (midpoint path rows
    # couple neighbors), so phase-separated columns never collide
    interior = np.flatnonzero(node >= 0)
    if len(interior):
        for off in range(blk):
            for phase in range(3):
                cols = interior[((interior % blk) == off)
                                & (node[interior] % 3 == phase)]
                if not len(cols):
                    continue
                diff, hs = fd_columns(cols)
                for j, h in zip(cols, hs):
                    k = node[j]
                    own = np.flatnonzero((node >= k - 1) & (node <= k + 1))
                    H[own, j] = diff[own] / h
                    H[border, j] = 0.0   # filled from the border sweep by symmetry
    H[np.ix_(border, interior)] = H[np.ix_(interior, border)].T
    return 0.5 * (H + H.T)


def _lstsq_multipliers(nlp, x, act, lb, ub):
    A, _ = _active_rows(nlp, x, act, lb, ub)
    g = nlp.gradient(x)
    if A.shape[0] == 0:
        return np.zeros(0)
    lam, *_ = np.linalg.lstsq(A.T, -g, rcond=None)
    return lam


def _split_multipliers(nlp, act, lam):
    me = nlp.me
    lam_eq = lam[:me]
    k = me
    mu_ineq = np.zeros(nlp.mi)
    mu_ineq[act.ineq] = lam[k:k + len(act.ineq)]
    k += len(act.ineq)
    mu_lower = np.zeros(nlp.n_vars)
    mu_upper = np.zeros(nlp.n_vars)
    # bound rows were written as x_i - b = 0: upper-active need lam >= 0,
    # lower-active need lam <= 0 (multiplier of lb - x <= 0 is -lam)
    mu_lower[act.lower] = -lam[k:k + len(act.lower)]
    k += len(act.lower)
    mu_upper[act.upper] = lam[k:k + len(act.upper)]
    return lam_eq, mu_ineq, mu_lower, mu_upper


def _kkt_residuals(nlp, x, act, lam, lb, ub):
    A, c = _active_rows(nlp, x, act, lb, ub)
    g = nlp.gradient(x)
    r = g + (A.T @ lam if A.shape[0] else 0.0)
    c_in = nlp.ineq_constraints(x)
    inact_viol = 0.0
    if nlp.mi:
        mask = np.ones(nlp.mi, dtype=bool)
        mask[act.ineq] = False
        if mask.any():
            inact_viol = max(0.0, float(np.max(c_in[mask])))
    bviol = max(float(np.max(np.maximum(lb - x, 0.0), initial=0.0)),
                float(np.max(np.maximum(x - ub, 0.0), initial=0.0)))
    feas = max(float(np.max(np.abs(c), initial=0.0)), inact_viol, bviol)
    comp = 0.0
    if len(act.ineq):
        comp = float(np.max(np.abs(c_in[act.ineq] * lam[nlp.me:nlp.me + len(act.ineq)]),
                            initial=0.0))
    return float(np.max(np.abs(r))), feas, comp


def _l1_violation(nlp, x, lb, ub) -> float:
    c_eq = nlp.eq_constraints(x)
    c_in = nlp.ineq_constraints(x)
    return (float(np.sum(np.abs(c_eq)))
            + float(np.sum(np.maximum(c_in, 0.0)))
            + float(np.sum(np.maximum(lb - x, 0.0)))
            + float(np.sum(np.maximum(x - ub, 0.0))))


def project_feasible(nlp: NlpProblem, x, rounds: int = 4, tol: float = 1e-9):
    """Gauss-Newton projection onto the violated constraints.

    Minimum-norm corrections for equality residuals and violated
    inequalities; used to repair warm starts that cut through steep path
    constraints (interpolation between coarse grid nodes can do that).
    """
    lb, ub = nlp.bounds()
    x = np.clip(np.asarray(x, dtype=float), lb, ub)
    for _ in range(rounds):
        c_eq = nlp.eq_constraints(x)
        c_in = nlp.ineq_constraints(x)
        viol = np.flatnonzero(c_in > tol)
        if np.max(np.abs(c_eq), initial=0.0) < tol and len(viol) == 0:
            break
        rows = [nlp.eq_jacobian(x)] if nlp.me else []
        vals = [c_eq] if nlp.me else []
        if len(viol):
            rows.append(nlp.ineq_jacobian(x)[viol])
            vals.append(c_in[viol])
        J = np.vstack(rows)
        c = np.concatenate(vals)
        JJt = J @ J.T
        JJt[np.diag_indices_from(JJt)] += 1e-10
        try:
            dx = -J.T @ np.linalg.solve(JJt, c)
        except np.linalg.LinAlgError:
            break
        x = np.clip(x + dx, lb, ub)
    return x


def newton_polish(nlp: NlpProblem, x0, opts: SolveOptions):
    """Active-set Newton iteration on the KKT system starting from x0."""
    lb, ub = nlp.bounds()
    x = np.clip(np.asarray(x0, dtype=float), lb, ub)
    act = _detect_active(nlp, x, lb, ub, opts.act_tol)
    lam = _lstsq_multipliers(nlp, x, act, lb, ub)
    best = None
    iters = 0
    stalls = 0

    for outer in range(opts.polish_max_iter):
        iters = outer + 1
        A, c = _active_rows(nlp, x, act, lb, ub)
        m = A.shape[0]
        stat, feas, comp = _kkt_residuals(nlp, x, act, lam, lb, ub)
        if best is None or stat + feas < best[0]:
            best = (stat + feas, x.copy(), lam.copy(),
                    ActiveSet(act.ineq.copy(), act.lower.copy(), act.upper.copy()))
        if stat < opts.stat_tol and feas < opts.feas_tol:
            # sign conditions: drop clearly wrong rows in bulk, borderline
            # ones one at a time
            lam_eq, mu_in, mu_lo, mu_up = _split_multipliers(nlp, act, lam)
            offenders = []
            for i, row in enumerate(act.ineq):
                if mu_in[row] < -1e-8:
                    offenders.append(("ineq", i, mu_in[row]))
            for i, var in enumerate(act.lower):
                if mu_lo[var] < -1e-8 and not np.isclose(lb[var], ub[var]):
                    offenders.append(("lower", i, mu_lo[var]))
            for i, var in enumerate(act.upper):
                if mu_up[var] < -1e-8:
                    offenders.append(("upper", i, mu_up[var]))
            if not offenders:
                return x, lam, act, iters, "converged"
            strong = [o for o in offenders if o[2] < -1e-6]
            to_drop = strong if strong else [min(offenders, key=lambda o: o[2])]
            drop = {"ineq": [], "lower": [], "upper": []}
            for kind, i, _ in to_drop:
                drop[kind].append(i)
            act.ineq = np.delete(act.ineq, drop["ineq"])
            act.lower = np.delete(act.lower, drop["lower"])
            act.upper = np.delete(act.upper, drop["upper"])
            lam = _lstsq_multipliers(nlp, x, act, lb, ub)
            continue

        mu_act = lam[nlp.me:nlp.me + len(act.ineq)] if len(act.ineq) else np.zeros(0)
        H = lagrangian_hessian(nlp, x, lam[:nlp.me], mu_act, act.ineq, opts.fd_eps)
        n = nlp.n_vars
        g = nlp.gradient(x)
        rhs = np.concatenate([-g, -c])
        hscale = max(1.0, float(np.max(np.abs(np.diag(H)))))

        def kkt_step(tau):
            # dual regularization keeps rank-deficient active sets solvable
            K = np.zeros((n + m, n + m))
            K[:n, :n] = H + tau * np.eye(n)
            K[:n, n:] = A.T
            K[n:, :n] = A
            K[n:, n:] = -1e-12 * np.eye(m)
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            return (sol[:n], sol[n:]) if np.all(np.isfinite(sol)) else (None, None)

        # Levenberg escalation: a plain Newton step on an indefinite
        # Lagrangian need not descend the exact-penalty merit; convexify
        # until it does
        viol0 = _l1_violation(nlp, x, lb, ub)
        f0 = nlp.objective(x)
        accepted = False
        for tau in (0.0, 1e-6 * hscale, 1e-4 * hscale, 1e-2 * hscale, hscale):
            dx, lam_new = kkt_step(tau)
            if dx is None:
                continue
            nu = max(10.0, 2.0 * float(np.max(np.abs(lam_new), initial=0.0)))
            m0 = f0 + nu * viol0
            step = 1.0
            for _ in range(10):
                x_try = x + step * dx
                m_try = nlp.objective(x_try) + nu * _l1_violation(nlp, x_try, lb, ub)
                if (m_try <= m0 - 1e-4 * step * nu * viol0
                        and m_try < m0 + 1e-12 * (1.0 + abs(m0))):
                    accepted = True
                    break
                step *= 0.5
            if accepted:
                break
        if not accepted:
            stalls += 1
            if stalls >= 4:
                break
            step = min(step, 1e-2)
        x = x + step * dx
        lam = lam + step * (lam_new - lam) if len(lam) == len(lam_new) else lam_new

        # active-set growth: newly violated inequalities/bounds
        c_in = nlp.ineq_constraints(x)
        if nlp.mi:
            mask = np.ones(nlp.mi, dtype=bool)
            mask[act.ineq] = False
            new = np.flatnonzero(mask & (c_in > opts.feas_tol))
            if len(new):
                act.ineq = np.sort(np.concatenate([act.ineq, new]))
                lam = _lstsq_multipliers(nlp, x, act, lb, ub)
        viol_lo = np.flatnonzero((lb - x) > opts.feas_tol)
        viol_up = np.flatnonzero((x - ub) > opts.feas_tol)
        if len(viol_lo) or len(viol_up):
            x = np.clip(x, lb, ub)
            act.lower = np.union1d(act.lower, viol_lo).astype(int)
            act.upper = np.setdiff1d(np.union1d(act.upper, viol_up).astype(int), act.lower)
            lam = _lstsq_multipliers(nlp, x, act, lb, ub)

    _, x, lam, act = best
    stat, feas, _ = _kkt_residuals(nlp, x, act, lam, lb, ub)
    status = "converged" if (stat < 1e-6 and feas < 1e-8) else "max_iterations"
    return x, lam, act, iters, status


def _run_slsqp(view, x0, opts: SolveOptions):
    lb, ub = view.bounds()
    cons = []
    if view.me:
        cons.append({"type": "eq", "fun": view.eq_constraints, "jac": view.eq_jacobian})
    if view.mi:
        cons.append({"type": "ineq",
                     "fun": lambda v: -view.ineq_constraints(v),
                     "jac": lambda v: -view.ineq_jacobian(v)})
    res = minimize(view.objective, np.clip(x0, lb, ub), jac=view.gradient,
                   bounds=list(zip(lb, ub)), constraints=cons, method="SLSQP",
                   options={"maxiter": opts.max_iter, "ftol": opts.ftol})
    return np.clip(res.x, lb, ub), int(res.nit)


def solve_nlp(nlp: NlpProblem, x0, opts: SolveOptions | None = None) -> NlpResult:
    opts = opts or SolveOptions()
    lb, ub = nlp.bounds()
    x0 = np.clip(np.asarray(x0, dtype=float), lb, ub)
    sqp_iters = 0
    x = x0

    if opts.backend == "slsqp":
        condense = opts.condense
        if condense == "auto":
            condense = nlp.n_vars > 250 and nlp.N > 3
        if condense:
            from .condense import CondensedNlp
            cnlp = CondensedNlp(nlp)
            xc, sqp_iters = _run_slsqp(cnlp, cnlp.from_full(x0), opts)
            x = cnlp.to_full(xc)
        else:
            x, sqp_iters = _run_slsqp(nlp, x0, opts)

    status = "converged"
    polish_iters = 0
    rough = False
    if opts.backend == "slsqp":
        c_eq = nlp.eq_constraints(x)
        c_in = nlp.ineq_constraints(x)
        rough = max(float(np.max(np.abs(c_eq), initial=0.0)),
                    float(np.max(c_in, initial=0.0))) > 1e-3
    if (opts.polish and not rough) or opts.backend == "newton":
        x, lam, act, polish_iters, status = newton_polish(nlp, x, opts)
    else:
        act = _detect_active(nlp, x, lb, ub, opts.act_tol)
        lam = _lstsq_multipliers(nlp, x, act, lb, ub)
        if rough:
            status = "infeasible"

    lam_eq, mu_in, mu_lo, mu_up = _split_multipliers(nlp, act, lam)
    stat, feas, comp = _kkt_residuals(nlp, x, act, lam, lb, ub)
    return NlpResult(x=x, lam_eq=lam_eq, mu_ineq=mu_in, mu_lower=mu_lo,
                     mu_upper=mu_up, active=act, status=status,
                     iterations=sqp_iters, polish_iterations=polish_iters,
                     stationarity=stat, feasibility=feas, complementarity=comp)
