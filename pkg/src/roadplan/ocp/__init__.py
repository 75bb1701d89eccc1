"""Direct optimal control: transcription, SQP solution, sensitivities."""

from __future__ import annotations

import numpy as np

from .problem import (BoundaryCondition, ConvergenceReport, Discretization,
                      Dynamics, FreeTime, Lagrange, Mayer, OcpProblem,
                      OcpSolution, PathConstraint, SensitivityData, StaticVar)
from .problems import (AvoidanceParams, Rate5Dynamics, ScalarSpeedDynamics,
                       avoidance_problem, control_energy, eta, eta_prime,
                       fixed_boundary, parking_problem, ramp, ramp_partials)
from .sensitivity import sensitivities, taylor_update
from .solver import NlpResult, SolveOptions, newton_polish, solve_nlp
from .transcribe import NlpProblem, discretize

__all__ = [
    "BoundaryCondition", "ConvergenceReport", "Discretization", "Dynamics",
    "FreeTime", "Lagrange", "Mayer", "OcpProblem", "OcpSolution",
    "PathConstraint", "SensitivityData", "StaticVar", "AvoidanceParams",
    "Rate5Dynamics", "ScalarSpeedDynamics", "avoidance_problem",
    "control_energy", "eta", "eta_prime", "fixed_boundary", "parking_problem",
    "ramp", "ramp_partials", "sensitivities", "taylor_update", "NlpResult",
    "SolveOptions", "newton_polish", "solve_nlp", "NlpProblem", "discretize",
    "solve", "solve_refined", "build_solution", "refine_guess",
]


def build_solution(nlp: NlpProblem, res: NlpResult) -> OcpSolution:
    Z, U, sigma, s = nlp.unpack(res.x)
    report = ConvergenceReport(
        status=res.status, backend="sqp+newton", iterations=res.iterations,
        polish_iterations=res.polish_iterations, kkt_stationarity=res.stationarity,
        kkt_feasibility=res.feasibility, kkt_complementarity=res.complementarity,
        message=res.message)
    return OcpSolution(
        times=nlp.times(res.x), states=Z, controls=U,
        tf=nlp.problem.t0 + sigma, statics=s,
        objective=nlp.objective(res.x), x=res.x,
        multipliers={"eq": res.lam_eq, "ineq": res.mu_ineq,
                     "lower": res.mu_lower, "upper": res.mu_upper},
        active_set={"ineq": res.active.ineq, "lower": res.active.lower,
                    "upper": res.active.upper},
        report=report)


def solve(problem: OcpProblem, disc: Discretization | None = None, x0=None,
          options: SolveOptions | None = None):
    """Discretize and solve; returns (OcpSolution, NlpProblem, NlpResult)."""
    disc = disc or Discretization()
    nlp = discretize(problem, disc)
    if x0 is None:
        x0 = nlp.make_guess()
    res = solve_nlp(nlp, x0, options)
    return build_solution(nlp, res), nlp, res


def refine_guess(nlp_coarse: NlpProblem, x_coarse, nlp_fine: NlpProblem):
    """Interpolate a coarse solution onto a finer grid as a warm start."""
    Z, U, sigma, s = nlp_coarse.unpack(x_coarse)
    tc, tf_ = nlp_coarse.tau, nlp_fine.tau
    Zf = np.column_stack([np.interp(tf_, tc, Z[:, i]) for i in range(nlp_coarse.nz)])
    if nlp_coarse.nu:
        mid = 0.5 * (tf_[:-1] + tf_[1:])
        idx = np.clip(np.searchsorted(tc, mid, side="right") - 1, 0, len(U) - 1)
        Uf = U[idx]
    else:
        Uf = np.zeros((nlp_fine.N - 1, 0))
    return nlp_fine.pack(Zf, Uf, sigma, s)


def simulate_guess(nlp_coarse: NlpProblem, x_coarse, nlp_fine: NlpProblem):
    """Warm start by re-integrating the coarse controls on the fine grid.

    Unlike plain interpolation this is exactly dynamics-feasible on the fine
    grid, so the fine solve starts with zero defects.
    """
    from .condense import CondensedNlp
    Z, U, sigma, s = nlp_coarse.unpack(x_coarse)
    mid = 0.5 * (nlp_fine.tau[:-1] + nlp_fine.tau[1:])
    idx = np.clip(np.searchsorted(nlp_coarse.tau, mid, side="right") - 1, 0, len(U) - 1)
    Uf = U[idx] if nlp_coarse.nu else np.zeros((nlp_fine.N - 1, 0))
    c = CondensedNlp(nlp_fine)
    return c.to_full(c.pack(Z[0], Uf, sigma, s))


def solve_refined(problem: OcpProblem, n_final: int = 101, scheme: str = "rk4",
                  n_start: int = 26, options: SolveOptions | None = None,
                  x0_coarse=None):
    """Coarse-to-fine mesh homotopy from the default straight-line guess.

    Each refinement interpolates the previous solution and re-solves warm
    (SQP plus Newton-KKT polish); interpolated guesses can violate steep
    path constraints between coarse nodes, which SQP absorbs reliably.
    """
    opts = options or SolveOptions()
    grids = [min(n_start, n_final)]
    while grids[-1] < n_final:
        grids.append(min(2 * grids[-1] - 1, n_final))

    nlp = discretize(problem, Discretization(n_nodes=grids[0], scheme=scheme))
    res = solve_nlp(nlp, x0_coarse if x0_coarse is not None else nlp.make_guess(), opts)
    for n in grids[1:]:
        nlp_fine = discretize(problem, Discretization(n_nodes=n, scheme=scheme))
        x0 = refine_guess(nlp, res.x, nlp_fine)
        res_fine = solve_nlp(nlp_fine, x0, opts)
        nlp, res = nlp_fine, res_fine
    return build_solution(nlp, res), nlp, res
