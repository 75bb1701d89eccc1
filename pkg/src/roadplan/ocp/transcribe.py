"""Full discretization of an OcpProblem into a dense NLP.

All states and controls become variables; one RK4 (or explicit Euler) step
per interval provides the matching conditions

    z_{k+1} - Phi_h(z_k, u_k) = 0,   h = sigma / (N - 1),

with a positive time-scale variable sigma handling free final times
(t = t0 + sigma * tau, tau on [0, 1]).  The Lagrange term uses the same
stage evaluations as the propagation scheme.  Variable layout:

    [z_0, u_0, z_1, u_1, ..., u_{N-2}, z_{N-1}, sigma?, s...]

Objective/constraint gradients are analytic, propagated through the RK4
stages by the chain rule.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch
from .problem import Discretization, OcpProblem


def _batch_eye(n: int, m: int) -> np.ndarray:
    return np.broadcast_to(np.eye(m), (n, m, m)).copy()


class _StepData:
    """One propagation sweep: maps, interval costs, and their derivatives."""

    __slots__ = ("phi", "dphi_dz", "dphi_du", "dphi_dh",
                 "q", "dq_dz", "dq_du", "dq_dh")


def _propagate(dyn, lag, Z, U, h, p, scheme) -> _StepData:
    """Evaluate Phi_h and the interval cost over all intervals at once.

    Z: (M, nz) interval-start states, U: (M, nu) interval controls.
    """
    out = _StepData()
    M, nz = Z.shape

    def f0(Zs):
        return lag.value(Zs, U, p) if lag else np.zeros(M)

    def f0_grads(Zs):
        if lag:
            return lag.grad_z(Zs, U, p), lag.grad_u(Zs, U, p)
        return np.zeros((M, nz)), np.zeros((M, U.shape[1]))

    if scheme == "euler":
        k1 = dyn.rhs(Z, U, p)
        A1, B1 = dyn.jac(Z, U, p)
        out.phi = Z + h * k1
        out.dphi_dz = _batch_eye(M, nz) + h * A1
        out.dphi_du = h * B1
        out.dphi_dh = k1
        c1 = f0(Z)
        g1, gu1 = f0_grads(Z)
        out.q = h * c1
        out.dq_dz = h * g1
        out.dq_du = h * gu1
        out.dq_dh = c1
        return out

    eye = _batch_eye(M, nz)

    k1 = dyn.rhs(Z, U, p)
    A1, B1 = dyn.jac(Z, U, p)
    dk1_dz, dk1_du = A1, B1
    dk1_dh = np.zeros_like(Z)

    z2 = Z + 0.5 * h * k1
    dz2_dz = eye + 0.5 * h * dk1_dz
    dz2_du = 0.5 * h * dk1_du
    dz2_dh = 0.5 * k1
    k2 = dyn.rhs(z2, U, p)
    A2, B2 = dyn.jac(z2, U, p)
    dk2_dz = A2 @ dz2_dz
    dk2_du = A2 @ dz2_du + B2
    dk2_dh = np.einsum("mij,mj->mi", A2, dz2_dh)

    z3 = Z + 0.5 * h * k2
    dz3_dz = eye + 0.5 * h * dk2_dz
    dz3_du = 0.5 * h * dk2_du
    dz3_dh = 0.5 * k2 + 0.5 * h * dk2_dh
    k3 = dyn.rhs(z3, U, p)
    A3, B3 = dyn.jac(z3, U, p)
    dk3_dz = A3 @ dz3_dz
    dk3_du = A3 @ dz3_du + B3
    dk3_dh = np.einsum("mij,mj->mi", A3, dz3_dh)

    z4 = Z + h * k3
    dz4_dz = eye + h * dk3_dz
    dz4_du = h * dk3_du
    dz4_dh = k3 + h * dk3_dh
    k4 = dyn.rhs(z4, U, p)
    A4, B4 = dyn.jac(z4, U, p)
    dk4_dz = A4 @ dz4_dz
    dk4_du = A4 @ dz4_du + B4
    dk4_dh = np.einsum("mij,mj->mi", A4, dz4_dh)

    ksum = k1 + 2 * k2 + 2 * k3 + k4
    out.phi = Z + (h / 6.0) * ksum
    out.dphi_dz = eye + (h / 6.0) * (dk1_dz + 2 * dk2_dz + 2 * dk3_dz + dk4_dz)
    out.dphi_du = (h / 6.0) * (dk1_du + 2 * dk2_du + 2 * dk3_du + dk4_du)
    out.dphi_dh = ksum / 6.0 + (h / 6.0) * (dk1_dh + 2 * dk2_dh + 2 * dk3_dh + dk4_dh)

    if lag is None:
        out.q = np.zeros(M)
        out.dq_dz = np.zeros_like(Z)
        out.dq_du = np.zeros_like(U)
        out.dq_dh = np.zeros(M)
        return out

    stages = ((Z, eye, np.zeros_like(dz2_du), np.zeros_like(Z), 1.0),
              (z2, dz2_dz, dz2_du, dz2_dh, 2.0),
              (z3, dz3_dz, dz3_du, dz3_dh, 2.0),
              (z4, dz4_dz, dz4_du, dz4_dh, 1.0))
    csum = np.zeros(M)
    dq_dz = np.zeros_like(Z)
    dq_du = np.zeros_like(U)
    dq_dh = np.zeros(M)
    for zs, dz_dz, dz_du, dz_dh, wgt in stages:
        c = f0(zs)
        gz, gu = f0_grads(zs)
        csum += wgt * c
        dq_dz += wgt * np.einsum("mi,mij->mj", gz, dz_dz)
        dq_du += wgt * (np.einsum("mi,mij->mj", gz, dz_du) + gu)
        dq_dh += wgt * np.einsum("mi,mi->m", gz, dz_dh)
    out.q = (h / 6.0) * csum
    out.dq_dz = (h / 6.0) * dq_dz
    out.dq_du = (h / 6.0) * dq_du
    out.dq_dh = csum / 6.0 + (h / 6.0) * dq_dh
    return out


class NlpProblem:
    """Dense NLP view of a discretized optimal control problem.

    Conventions: equality constraints c_eq(x) = 0; inequality constraints
    c_in(x) <= 0; simple bounds lb <= x <= ub.
    """

    def __init__(self, problem: OcpProblem, disc: Discretization):
        self.problem = problem
        self.disc = disc
        nz, nu, ns = problem.nz, problem.nu, problem.ns
        N = disc.n_nodes
        self.N = N
        self.nz, self.nu, self.ns = nz, nu, ns
        self.free_time = problem.free_time

        blk = nz + nu
        self.z_index = np.array([[k * blk + i for i in range(nz)] for k in range(N)])
        self.u_index = np.array([[k * blk + nz + i for i in range(nu)]
                                 for k in range(N - 1)], dtype=int).reshape(N - 1, nu)
        base = (N - 1) * blk + nz
        self.sigma_index = base if self.free_time else None
        # keep the horizon variable O(1): x[sigma_index] = sigma / tf_scale
        self.tf_scale = float(problem.tf.guess) if self.free_time else 1.0
        s0 = base + (1 if self.free_time else 0)
        self.s_index = np.arange(s0, s0 + ns)
        self.n_vars = s0 + ns

        self.tau = np.linspace(0.0, 1.0, N)
        self.dtau = 1.0 / (N - 1)

        self.me = (N - 1) * nz + (problem.boundary.nb if problem.boundary else 0)
        self.midpoints = bool(disc.path_midpoints)
        rows_per_g = N + (N - 1 if self.midpoints else 0)
        self.mi = sum(pc.ng for pc in problem.path) * rows_per_g
        for pc in problem.path:
            if pc.ng <= 0:
                raise DimensionMismatch("path constraint with non-positive ng")

        self._cache_key = None
        self._cache_val = None

    # -- variable helpers ------------------------------------------------------

    def unpack(self, x):
        Z = x[self.z_index]
        U = x[self.u_index] if self.nu else np.zeros((self.N - 1, 0))
        sigma = x[self.sigma_index] * self.tf_scale if self.free_time \
            else float(self.problem.tf - self.problem.t0)
        s = x[self.s_index]
        return Z, U, float(sigma), s

    def pack(self, Z, U, sigma, s):
        x = np.zeros(self.n_vars)
        x[self.z_index] = Z
        if self.nu:
            x[self.u_index] = U
        if self.free_time:
            x[self.sigma_index] = sigma / self.tf_scale
        x[self.s_index] = s
        return x

    def times(self, x):
        _, _, sigma, _ = self.unpack(x)
        return self.problem.t0 + sigma * self.tau

    def make_guess(self, z0=None, zf=None):
        """Straight-line state interpolation, zero controls (clipped to the box)."""
        pr = self.problem
        z0 = np.asarray(z0 if z0 is not None else pr.z0_guess, dtype=float)
        zf = np.asarray(zf if zf is not None else
                        (pr.zf_guess if pr.zf_guess is not None else z0), dtype=float)
        Z = np.outer(1 - self.tau, z0) + np.outer(self.tau, zf)
        U = np.zeros((self.N - 1, self.nu))
        if pr.u_lower is not None:
            U = np.clip(U, pr.u_lower, pr.u_upper)
        sigma = pr.tf.guess if self.free_time else float(pr.tf - pr.t0)
        s = np.array([sv.guess for sv in pr.statics])
        return self.pack(Z, U, sigma, s)

    def bounds(self):
        pr = self.problem
        lb = np.full(self.n_vars, -np.inf)
        ub = np.full(self.n_vars, np.inf)
        if pr.z_lower is not None:
            lb[self.z_index] = pr.z_lower
        if pr.z_upper is not None:
            ub[self.z_index] = pr.z_upper
        if self.nu and pr.u_lower is not None:
            lb[self.u_index] = pr.u_lower
        if self.nu and pr.u_upper is not None:
            ub[self.u_index] = pr.u_upper
        if self.free_time:
            lb[self.sigma_index] = pr.tf.lower / self.tf_scale
            ub[self.sigma_index] = pr.tf.upper / self.tf_scale
        for i, sv in enumerate(pr.statics):
            lb[self.s_index[i]] = sv.lower
            ub[self.s_index[i]] = sv.upper
        return lb, ub

    # -- shared evaluation cache ----------------------------------------------

    def _steps(self, x) -> _StepData:
        key = x.tobytes()
        if key != self._cache_key:
            Z, U, sigma, _ = self.unpack(x)
            h = sigma * self.dtau
            self._cache_val = _propagate(self.problem.dynamics, self.problem.lagrange,
                                         Z[:-1], U, h, self.problem.p, self.disc.scheme)
            self._cache_key = key
        return self._cache_val

    # -- objective -------------------------------------------------------------

    def objective(self, x) -> float:
        Z, U, sigma, s = self.unpack(x)
        pr = self.problem
        val = float(np.sum(self._steps(x).q))
        if pr.mayer:
            val += float(pr.mayer.value(Z[-1], pr.t0 + sigma, s, pr.p))
        return val

    def gradient(self, x) -> np.ndarray:
        Z, U, sigma, s = self.unpack(x)
        pr = self.problem
        sd = self._steps(x)
        g = np.zeros(self.n_vars)
        np.add.at(g, self.z_index[:-1].ravel(), sd.dq_dz.ravel())
        if self.nu:
            np.add.at(g, self.u_index.ravel(), sd.dq_du.ravel())
        if self.free_time:
            g[self.sigma_index] += float(np.sum(sd.dq_dh)) * self.dtau * self.tf_scale
        if pr.mayer:
            tf = pr.t0 + sigma
            g[self.z_index[-1]] += pr.mayer.grad_zf(Z[-1], tf, s, pr.p)
            if self.free_time:
                g[self.sigma_index] += float(pr.mayer.grad_tf(Z[-1], tf, s, pr.p)) * self.tf_scale
            if self.ns:
                g[self.s_index] += pr.mayer.grad_s(Z[-1], tf, s, pr.p)
        return g

    # -- equality constraints: defects then boundary ---------------------------

    def eq_constraints(self, x) -> np.ndarray:
        Z, U, sigma, s = self.unpack(x)
        pr = self.problem
        sd = self._steps(x)
        defects = Z[1:] - sd.phi
        parts = [defects.ravel()]
        if pr.boundary:
            parts.append(pr.boundary.value(Z[0], Z[-1], pr.t0 + sigma, s, pr.p))
        return np.concatenate(parts)

    def eq_jacobian(self, x) -> np.ndarray:
        Z, U, sigma, s = self.unpack(x)
        pr = self.problem
        sd = self._steps(x)
        N, nz, nu = self.N, self.nz, self.nu
        J = np.zeros((self.me, self.n_vars))
        for k in range(N - 1):
            rows = slice(k * nz, (k + 1) * nz)
            J[rows, self.z_index[k + 1]] = np.eye(nz)
            J[rows, self.z_index[k][0]:self.z_index[k][0] + nz] = -sd.dphi_dz[k]
            if nu:
                J[rows, self.u_index[k][0]:self.u_index[k][0] + nu] = -sd.dphi_du[k]
            if self.free_time:
                J[rows, self.sigma_index] = -sd.dphi_dh[k] * self.dtau * self.tf_scale
        if pr.boundary:
            d_z0, d_zf, d_tf, d_s = pr.boundary.jac(Z[0], Z[-1], pr.t0 + sigma, s, pr.p)
            rows = slice((N - 1) * nz, self.me)
            J[rows, self.z_index[0][0]:self.z_index[0][0] + nz] = d_z0
            J[rows, self.z_index[-1][0]:self.z_index[-1][0] + nz] = d_zf
            if self.free_time:
                J[rows, self.sigma_index] = d_tf * self.tf_scale
            if self.ns:
                J[rows, self.s_index[0]:self.s_index[0] + self.ns] = d_s
        return J

    # -- inequality constraints g(x) <= 0 ---------------------------------------

    def _path_eval_points(self, Z, sigma):
        """Grid states/times, plus interval midpoints when enabled."""
        tt = self.problem.t0 + sigma * self.tau
        if not self.midpoints:
            return tt, Z, None, None
        Zm = 0.5 * (Z[:-1] + Z[1:])
        tm = self.problem.t0 + sigma * 0.5 * (self.tau[:-1] + self.tau[1:])
        return tt, Z, tm, Zm

    def ineq_constraints(self, x) -> np.ndarray:
        if self.mi == 0:
            return np.zeros(0)
        Z, U, sigma, s = self.unpack(x)
        pr = self.problem
        tt, _, tm, Zm = self._path_eval_points(Z, sigma)
        vals = []
        for pc in pr.path:
            vals.append(pc.value(tt, Z, s, pr.p).ravel())
            if self.midpoints:
                vals.append(pc.value(tm, Zm, s, pr.p).ravel())
        return np.concatenate(vals)

    def ineq_jacobian(self, x) -> np.ndarray:
        if self.mi == 0:
            return np.zeros((0, self.n_vars))
        Z, U, sigma, s = self.unpack(x)
        pr = self.problem
        tt, _, tm, Zm = self._path_eval_points(Z, sigma)
        tau_m = 0.5 * (self.tau[:-1] + self.tau[1:])
        J = np.zeros((self.mi, self.n_vars))
        row0 = 0
        for pc in pr.path:
            dZ, dS, dT = pc.jac(tt, Z, s, pr.p)
            for k in range(self.N):
                rows = slice(row0 + k * pc.ng, row0 + (k + 1) * pc.ng)
                J[rows, self.z_index[k][0]:self.z_index[k][0] + self.nz] = dZ[k]
                if self.ns:
                    J[rows, self.s_index[0]:self.s_index[0] + self.ns] = dS[k]
                if self.free_time:
                    J[rows, self.sigma_index] = dT[k] * self.tau[k] * self.tf_scale
            row0 += self.N * pc.ng
            if self.midpoints:
                dZm, dSm, dTm = pc.jac(tm, Zm, s, pr.p)
                for k in range(self.N - 1):
                    rows = slice(row0 + k * pc.ng, row0 + (k + 1) * pc.ng)
                    J[rows, self.z_index[k][0]:self.z_index[k][0] + self.nz] = 0.5 * dZm[k]
                    J[rows, self.z_index[k + 1][0]:self.z_index[k + 1][0] + self.nz] = 0.5 * dZm[k]
                    if self.ns:
                        J[rows, self.s_index[0]:self.s_index[0] + self.ns] = dSm[k]
                    if self.free_time:
                        J[rows, self.sigma_index] = dTm[k] * tau_m[k] * self.tf_scale
                row0 += (self.N - 1) * pc.ng
        return J

    # -- fast J^T v products (avoid materializing dense jacobians) --------------

    def eq_jac_t_vec(self, x, lam) -> np.ndarray:
        Z, U, sigma, s = self.unpack(x)
        pr = self.problem
        sd = self._steps(x)
        N, nz, nu = self.N, self.nz, self.nu
        g = np.zeros(self.n_vars)
        lam_def = lam[:(N - 1) * nz].reshape(N - 1, nz)
        g[self.z_index[1:]] += lam_def
        g[self.z_index[:-1]] -= np.einsum("mi,mij->mj", lam_def, sd.dphi_dz)
        if nu:
            g[self.u_index] -= np.einsum("mi,mij->mj", lam_def, sd.dphi_du)
        if self.free_time:
            g[self.sigma_index] -= float(np.sum(lam_def * sd.dphi_dh)) * self.dtau * self.tf_scale
        if pr.boundary:
            lam_b = lam[(N - 1) * nz:]
            d_z0, d_zf, d_tf, d_s = pr.boundary.jac(Z[0], Z[-1], pr.t0 + sigma, s, pr.p)
            g[self.z_index[0]] += d_z0.T @ lam_b
            g[self.z_index[-1]] += d_zf.T @ lam_b
            if self.free_time:
                g[self.sigma_index] += float(d_tf @ lam_b) * self.tf_scale
            if self.ns:
                g[self.s_index] += d_s.T @ lam_b
        return g

    def ineq_jac_t_vec(self, x, mu) -> np.ndarray:
        """J_in(x)^T @ mu for a full-length mu (zeros on inactive rows)."""
        g = np.zeros(self.n_vars)
        if self.mi == 0 or not np.any(mu):
            return g
        Z, U, sigma, s = self.unpack(x)
        pr = self.problem
        tt, _, tm, Zm = self._path_eval_points(Z, sigma)
        tau_m = 0.5 * (self.tau[:-1] + self.tau[1:])
        row0 = 0
        for pc in pr.path:
            mu_pc = mu[row0:row0 + self.N * pc.ng].reshape(self.N, pc.ng)
            row0 += self.N * pc.ng
            if np.any(mu_pc):
                dZ, dS, dT = pc.jac(tt, Z, s, pr.p)
                g[self.z_index] += np.einsum("ng,ngz->nz", mu_pc, dZ)
                if self.ns:
                    g[self.s_index] += np.einsum("ng,ngs->s", mu_pc, dS)
                if self.free_time:
                    g[self.sigma_index] += float(np.sum(mu_pc * dT * self.tau[:, None])) * self.tf_scale
            if self.midpoints:
                mu_m = mu[row0:row0 + (self.N - 1) * pc.ng].reshape(self.N - 1, pc.ng)
                row0 += (self.N - 1) * pc.ng
                if np.any(mu_m):
                    dZm, dSm, dTm = pc.jac(tm, Zm, s, pr.p)
                    half = 0.5 * np.einsum("ng,ngz->nz", mu_m, dZm)
                    g[self.z_index[:-1]] += half
                    g[self.z_index[1:]] += half
                    if self.ns:
                        g[self.s_index] += np.einsum("ng,ngs->s", mu_m, dSm)
                    if self.free_time:
                        g[self.sigma_index] += float(np.sum(mu_m * dTm * tau_m[:, None])) * self.tf_scale
        return g

    # -- structure hints for finite-difference Hessians -------------------------

    def node_of_var(self) -> np.ndarray:
        """Node index per variable; -1 marks border columns (sigma, statics
        and the first/last node, which boundary conditions may couple)."""
        node = np.full(self.n_vars, -1, dtype=int)
        for k in range(1, self.N - 1):
            node[self.z_index[k]] = k
            if k < self.N - 1 and self.nu:
                node[self.u_index[k]] = k
        if self.nu:
            node[self.u_index[0]] = -1  # tied to node 0 (border)
        return node

    def with_params(self, p) -> "NlpProblem":
        return NlpProblem(self.problem.with_params(p), self.disc)


def discretize(problem: OcpProblem, disc: Discretization) -> NlpProblem:
    """Transcribe the problem; validates dimensions eagerly."""
    nlp = NlpProblem(problem, disc)
    x = nlp.make_guess(np.zeros(problem.nz) if problem.z0_guess is None else None)
    try:
        nlp.objective(x)
        nlp.eq_constraints(x)
        nlp.ineq_constraints(x)
    except (ValueError, IndexError) as exc:
        raise DimensionMismatch(str(exc)) from exc
    return nlp
