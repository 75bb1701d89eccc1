"""Dense bounded-variable primal simplex for small equality-constrained LPs.

    minimize    c . w
    subject to  E w = rhs,   lower <= w <= upper   (all bounds finite)

Sized for the collision-certificate programs (a handful of variables, one or
two equality rows), so everything is dense and solved with numpy.  Bland's
rule is used for both the entering and the leaving choice, which guarantees
termination and makes the solve deterministic: identical input produces a
bitwise-identical result.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import LpError, LpInfeasible

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_ITER = 10_000


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class BoxedLp:
    c: np.ndarray          # (n,)
    E: np.ndarray          # (m, n), m < n
    rhs: np.ndarray        # (m,)
    lower: np.ndarray      # (n,)
    upper: np.ndarray      # (n,)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        E = np.atleast_2d(np.asarray(self.E, dtype=float))
        rhs = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        n = c.shape[0]
        if E.size == 0:
            E = E.reshape(0, n)
        m = E.shape[0]
        if E.shape != (m, n) or rhs.shape != (m,):
            raise ValueError("inconsistent equality dimensions")
        if m >= n:
            raise ValueError("need fewer equality rows than variables")
        if lower.shape != (n,) or upper.shape != (n,):
            raise ValueError("bounds must have one entry per variable")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("all bounds must be finite")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.E.shape[0]


@dataclass(frozen=True)
class LpResult:
    status: LpStatus
    value: float
    w: np.ndarray


class _Simplex:
    """One bounded-variable simplex run over a fixed column set."""

    def __init__(self, c, E, rhs, lower, upper, basis, at_upper):
        self.c = c
        self.E = E
        self.rhs = rhs
        self.lower = lower
        self.upper = upper
        self.basis = basis                 # list of basic variable indices
        self.at_upper = at_upper           # bool per variable, meaningful if nonbasic
        self.n = c.shape[0]
        self.m = E.shape[0]

    def _nonbasic_values(self):
        x = np.where(self.at_upper, self.upper, self.lower).astype(float)
        return x

    def run(self):
        x = self._nonbasic_values()
        for _ in range(MAX_ITER):
            Eb = self.E[:, self.basis]
            nonbasic = [j for j in range(self.n) if j not in set(self.basis)]
            resid = self.rhs - self.E[:, nonbasic] @ x[nonbasic] if nonbasic else self.rhs.copy()
            if self.m:
                xb = np.linalg.solve(Eb, resid)
            else:
                xb = np.zeros(0)
            x[self.basis] = xb

            # reduced costs
            if self.m:
                lam = np.linalg.solve(Eb.T, self.c[self.basis])
            else:
                lam = np.zeros(0)
            entering = -1
            direction = 0.0
            for j in nonbasic:                       # Bland: smallest index first
                d_j = self.c[j] - lam @ self.E[:, j]
                if not self.at_upper[j] and d_j < -PIVOT_TOL:
                    entering, direction = j, 1.0
                    break
                if self.at_upper[j] and d_j > PIVOT_TOL:
                    entering, direction = j, -1.0
                    break
            if entering < 0:
                return x        # optimal

            if self.m:
                alpha = np.linalg.solve(Eb, self.E[:, entering])
            else:
                alpha = np.zeros(0)
            delta = -direction * alpha              # d x_B / d t, t >= 0

            def _row_limit(i):
                """Step at which basic row i blocks, or None."""
                b = self.basis[i]
                if delta[i] < -PIVOT_TOL:
                    return (x[b] - self.lower[b]) / (-delta[i]), False
                if delta[i] > PIVOT_TOL:
                    return (self.upper[b] - x[b]) / delta[i], True
                return None

            swap_t = self.upper[entering] - self.lower[entering]
            limits = [(i,) + lim for i in range(self.m)
                      if (lim := _row_limit(i)) is not None]
            t_basic = min((t for _, t, _ in limits), default=np.inf)
            t_max = max(min(swap_t, t_basic), 0.0)
            if not np.isfinite(t_max):
                raise LpError("unbounded step in a finite box (cannot happen)")

            if t_basic >= swap_t - PIVOT_TOL:
                # entering variable swings to its other bound; basis unchanged
                self.at_upper[entering] = not self.at_upper[entering]
                x[entering] = self.upper[entering] if self.at_upper[entering] else self.lower[entering]
            else:
                # Bland again: smallest blocking variable index leaves
                blockers = [(i, hits_up) for i, t, hits_up in limits
                            if t <= t_basic + PIVOT_TOL]
                leaving_row, hit_upper = min(blockers, key=lambda e: self.basis[e[0]])
                leaving = self.basis[leaving_row]
                x[entering] = (self.lower[entering] if direction > 0
                               else self.upper[entering]) + direction * t_max
                self.at_upper[leaving] = hit_upper
                x[leaving] = self.upper[leaving] if hit_upper else self.lower[leaving]
                self.basis[leaving_row] = entering
        raise LpError("simplex iteration limit reached")


class Solver:
    """Reusable LP solver; create one per thread of execution."""

    def solve(self, lp: BoxedLp) -> LpResult:
        n, m = lp.n, lp.m

        if m == 0:
            w = np.where(lp.c >= 0.0, lp.lower, lp.upper).astype(float)
            return LpResult(LpStatus.OPTIMAL, float(lp.c @ w), w)

        # phase 1: artificial variables with signed identity columns
        x0 = lp.lower.copy()
        resid = lp.rhs - lp.E @ x0
        signs = np.where(resid >= 0.0, 1.0, -1.0)
        art_cols = np.zeros((m, m))
        for i in range(m):
            art_cols[i, i] = signs[i]
        art_ub = float(np.sum(np.abs(resid))) + 1.0

        c1 = np.concatenate([np.zeros(n), np.ones(m)])
        E1 = np.hstack([lp.E, art_cols])
        lower1 = np.concatenate([lp.lower, np.zeros(m)])
        upper1 = np.concatenate([lp.upper, np.full(m, art_ub)])
        basis = list(range(n, n + m))
        at_upper = np.zeros(n + m, dtype=bool)

        phase1 = _Simplex(c1, E1, lp.rhs, lower1, upper1, basis, at_upper)
        x1 = phase1.run()
        if float(c1 @ x1) > FEAS_TOL:
            return LpResult(LpStatus.INFEASIBLE, float("nan"), np.full(n, np.nan))

        # pin any artificial still around at zero, then optimize the true cost
        c2 = np.concatenate([lp.c, np.zeros(m)])
        lower2 = lower1.copy()
        upper2 = upper1.copy()
        lower2[n:] = 0.0
        upper2[n:] = 0.0
        at_upper[n:] = False
        phase2 = _Simplex(c2, E1, lp.rhs, lower2, upper2, phase1.basis, at_upper)
        x2 = phase2.run()

        w = x2[:n]
        eq_err = float(np.max(np.abs(lp.E @ w - lp.rhs))) if m else 0.0
        if eq_err > 1e-7:
            raise LpInfeasible(f"equality residual {eq_err:.2e} after solve")
        w = np.clip(w, lp.lower, lp.upper)   # scrub roundoff at the bounds
        return LpResult(LpStatus.OPTIMAL, float(lp.c @ w), w)


def solve(lp: BoxedLp) -> LpResult:
    return Solver().solve(lp)
