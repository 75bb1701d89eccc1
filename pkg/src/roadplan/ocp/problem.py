"""Containers for parametric optimal control problems and their solutions.

A problem is posed on [t0, tf] (tf possibly free) with dynamics z' = f(z,u,p),
a Mayer + Lagrange objective, vector path constraints g(t,z,s,p) <= 0,
boundary conditions on (z(t0), z(tf), tf, s, p), control/state boxes and an
optional vector s of static decision variables (entries that are optimized
but are neither states nor controls, e.g. an initial standoff distance).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class Dynamics:
    """Vectorized right-hand side with analytic Jacobians.

    rhs(Z, U, p)  -> (n, nz)   for stacked rows of states/controls
    jac(Z, U, p)  -> (fz, fu)  with shapes (n, nz, nz) and (n, nz, nu)
    """

    nz: int
    nu: int

    def rhs(self, Z, U, p):  # pragma: no cover - interface
        raise NotImplementedError

    def jac(self, Z, U, p):  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class Lagrange:
    """Running cost f0(z, u, p) with analytic partials, vectorized like Dynamics."""

    value: Callable            # (Z, U, p) -> (n,)
    grad_z: Callable           # (Z, U, p) -> (n, nz)
    grad_u: Callable           # (Z, U, p) -> (n, nu)


@dataclass
class Mayer:
    """Terminal cost phi(zf, tf, s, p) with analytic partials."""

    value: Callable            # (zf, tf, s, p) -> float
    grad_zf: Callable          # -> (nz,)
    grad_tf: Callable          # -> float
    grad_s: Callable           # -> (ns,)


@dataclass
class PathConstraint:
    """Vector constraint g(t, z, s, p) <= 0 imposed at every grid point.

    value(tt, Z, s, p) -> (n, ng); the jacobian callable returns
    (d/dZ (n, ng, nz), d/ds (n, ng, ns), d/dt (n, ng)).
    """

    ng: int
    value: Callable
    jac: Callable
    label: str = "path"


@dataclass
class BoundaryCondition:
    """psi_b(z0, zf, tf, s, p) = 0 with analytic partials."""

    nb: int
    value: Callable            # -> (nb,)
    jac: Callable              # -> (d_z0 (nb,nz), d_zf (nb,nz), d_tf (nb,), d_s (nb,ns))


@dataclass
class FreeTime:
    guess: float
    lower: float = 0.01
    upper: float = 1e3


@dataclass
class StaticVar:
    name: str
    guess: float
    lower: float = -np.inf
    upper: float = np.inf


@dataclass
class OcpProblem:
    dynamics: Dynamics
    t0: float = 0.0
    tf: float | FreeTime = 1.0
    mayer: Optional[Mayer] = None
    lagrange: Optional[Lagrange] = None
    path: Sequence[PathConstraint] = field(default_factory=list)
    boundary: Optional[BoundaryCondition] = None
    u_lower: Optional[np.ndarray] = None
    u_upper: Optional[np.ndarray] = None
    z_lower: Optional[np.ndarray] = None
    z_upper: Optional[np.ndarray] = None
    statics: Sequence[StaticVar] = field(default_factory=list)
    p: np.ndarray = field(default_factory=lambda: np.zeros(0))
    z0_guess: Optional[np.ndarray] = None     # used by the default initial guess
    zf_guess: Optional[np.ndarray] = None

    @property
    def nz(self) -> int:
        return self.dynamics.nz

    @property
    def nu(self) -> int:
        return self.dynamics.nu

    @property
    def ns(self) -> int:
        return len(self.statics)

    @property
    def free_time(self) -> bool:
        return isinstance(self.tf, FreeTime)

    def with_params(self, p) -> "OcpProblem":
        import copy
        clone = copy.copy(self)
        clone.p = np.asarray(p, dtype=float)
        return clone


@dataclass(frozen=True)
class Discretization:
    n_nodes: int = 51          # grid points; n_nodes - 1 control intervals
    scheme: str = "rk4"        # "rk4" or "euler"
    path_midpoints: bool = False   # also impose path constraints at interval
    # midpoints (linear state interpolation); tightens steep constraints that
    # a pure grid enforcement lets trajectories cut between nodes

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("need at least two grid points")
        if self.scheme not in ("rk4", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class ConvergenceReport:
    status: str                      # "converged", "max_iterations", "line_search"
    backend: str
    iterations: int
    polish_iterations: int
    kkt_stationarity: float
    kkt_feasibility: float
    kkt_complementarity: float
    message: str = ""
    log: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.status == "converged"


@dataclass
class OcpSolution:
    times: np.ndarray                # (N,)
    states: np.ndarray               # (N, nz)
    controls: np.ndarray             # (N-1, nu)
    tf: float
    statics: np.ndarray              # (ns,)
    objective: float
    x: np.ndarray                    # raw NLP variable vector
    multipliers: dict                # {"eq": ..., "ineq": ..., "lower": ..., "upper": ...}
    active_set: dict                 # {"ineq": indices, "lower": ..., "upper": ...}
    report: ConvergenceReport

    def interp_state(self, t: float) -> np.ndarray:
        """Piecewise-linear state lookup (clamped to the horizon)."""
        t = min(max(t, self.times[0]), self.times[-1])
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = max(0, min(i, len(self.times) - 2))
        span = self.times[i + 1] - self.times[i]
        lam = 0.0 if span == 0 else (t - self.times[i]) / span
        return (1 - lam) * self.states[i] + lam * self.states[i + 1]

    def control_at(self, t: float) -> np.ndarray:
        """Piecewise-constant control lookup."""
        i = int(np.searchsorted(self.times[:-1], t, side="right")) - 1
        i = max(0, min(i, len(self.controls) - 1))
        return self.controls[i]


@dataclass
class SensitivityData:
    p_star: np.ndarray
    dx_dp: np.ndarray                # (n_vars, n_p) full variable sensitivity
    dz_dp: np.ndarray                # (N, nz, n_p)
    du_dp: np.ndarray                # (N-1, nu, n_p)
    dtf_dp: np.ndarray               # (n_p,)
    dstatics_dp: np.ndarray          # (ns, n_p)
    dobjective_dp: np.ndarray        # (n_p,)
