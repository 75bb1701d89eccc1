"""Condensed (control-space) view of a transcribed problem.

The full-discretization NLP carries every state as a variable, which is the
form we certify, polish, and differentiate.  Its dense SQP globalization
cost grows like O(n^3) though, so large grids are first solved in the
condensed space (z_0, u_0..u_{N-2}, sigma, s): states are rolled out through
the same one-step map Phi_h, and their derivatives propagate by the chain
rule.  The condensed optimum seeds the full NLP, whose Newton-KKT polish
restores exact defect feasibility.

State boxes (except on z_0) become explicit inequality rows here, since the
rolled-out states are no longer variables.
"""

from __future__ import annotations

import numpy as np

from .transcribe import NlpProblem, _propagate


class CondensedNlp:
    def __init__(self, nlp: NlpProblem):
        self.nlp = nlp
        pr = nlp.problem
        nz, nu, ns, N = nlp.nz, nlp.nu, nlp.ns, nlp.N
        self.nz, self.nu, self.ns, self.N = nz, nu, ns, N
        self.free_time = nlp.free_time

        self.z0_slice = slice(0, nz)
        self.u_index = np.arange(nz, nz + nu * (N - 1)).reshape(N - 1, nu)
        base = nz + nu * (N - 1)
        self.sigma_index = base if self.free_time else None
        s0 = base + (1 if self.free_time else 0)
        self.s_index = np.arange(s0, s0 + ns)
        self.n_vars = s0 + ns

        # bounded state coordinates (beyond z_0) become inequality rows
        lbz = pr.z_lower if pr.z_lower is not None else np.full(nz, -np.inf)
        ubz = pr.z_upper if pr.z_upper is not None else np.full(nz, np.inf)
        self.state_lo = [(i, lbz[i]) for i in range(nz) if np.isfinite(lbz[i])]
        self.state_hi = [(i, ubz[i]) for i in range(nz) if np.isfinite(ubz[i])]

        self.me = pr.boundary.nb if pr.boundary else 0
        self.midpoints = nlp.midpoints
        self.mi = nlp.mi + (N - 1) * (len(self.state_lo) + len(self.state_hi))

        self._cache_key = None
        self._cache = None

    # -- packing -----------------------------------------------------------------

    def from_full(self, x_full):
        Z, U, sigma, s = self.nlp.unpack(x_full)
        return self.pack(Z[0], U, sigma, s)

    def pack(self, z0, U, sigma, s):
        x = np.zeros(self.n_vars)
        x[self.z0_slice] = z0
        if self.nu:
            x[self.u_index] = U
        if self.free_time:
            x[self.sigma_index] = sigma / self.nlp.tf_scale
        x[self.s_index] = s
        return x

    def unpack(self, x):
        z0 = x[self.z0_slice]
        U = x[self.u_index] if self.nu else np.zeros((self.N - 1, 0))
        sigma = x[self.sigma_index] * self.nlp.tf_scale if self.free_time else \
            float(self.nlp.problem.tf - self.nlp.problem.t0)
        return z0, U, float(sigma), x[self.s_index]

    def to_full(self, x):
        Z = self._rollout(x)["Z"]
        _, U, sigma, s = self.unpack(x)
        return self.nlp.pack(Z, U, sigma, s)

    def bounds(self):
        pr = self.nlp.problem
        lb = np.full(self.n_vars, -np.inf)
        ub = np.full(self.n_vars, np.inf)
        if pr.z_lower is not None:
            lb[self.z0_slice] = pr.z_lower
        if pr.z_upper is not None:
            ub[self.z0_slice] = pr.z_upper
        if self.nu and pr.u_lower is not None:
            lb[self.u_index] = pr.u_lower
        if self.nu and pr.u_upper is not None:
            ub[self.u_index] = pr.u_upper
        if self.free_time:
            lb[self.sigma_index] = pr.tf.lower / self.nlp.tf_scale
            ub[self.sigma_index] = pr.tf.upper / self.nlp.tf_scale
        for i, sv in enumerate(pr.statics):
            lb[self.s_index[i]] = sv.lower
            ub[self.s_index[i]] = sv.upper
        return lb, ub

    # -- rollout with chain-rule sensitivities ------------------------------------

    def _rollout(self, x):
        key = x.tobytes()
        if key == self._cache_key:
            return self._cache
        nlp = self.nlp
        pr = nlp.problem
        z0, U, sigma, s = self.unpack(x)
        N, nz, n = self.N, self.nz, self.n_vars
        h = sigma * nlp.dtau

        Z = np.zeros((N, nz))
        Z[0] = z0
        S = np.zeros((N, nz, n))            # dz_k / dx_cond
        S[0, :, :nz] = np.eye(nz)
        q_total = 0.0
        gq = np.zeros(n)
        for k in range(N - 1):
            sd = _propagate(pr.dynamics, pr.lagrange, Z[k:k + 1], U[k:k + 1],
                            h, pr.p, nlp.disc.scheme)
            Z[k + 1] = sd.phi[0]
            S[k + 1] = sd.dphi_dz[0] @ S[k]
            if self.nu:
                S[k + 1][:, self.u_index[k]] += sd.dphi_du[0]
            if self.free_time:
                S[k + 1][:, self.sigma_index] += sd.dphi_dh[0] * nlp.dtau * nlp.tf_scale
            q_total += float(sd.q[0])
            gq += sd.dq_dz[0] @ S[k]
            if self.nu:
                gq[self.u_index[k]] += sd.dq_du[0]
            if self.free_time:
                gq[self.sigma_index] += float(sd.dq_dh[0]) * nlp.dtau * nlp.tf_scale
        self._cache = {"Z": Z, "S": S, "q": q_total, "gq": gq,
                       "sigma": sigma, "s": s, "U": U}
        self._cache_key = key
        return self._cache

    # -- NLP interface -------------------------------------------------------------

    def objective(self, x) -> float:
        ro = self._rollout(x)
        pr = self.nlp.problem
        val = ro["q"]
        if pr.mayer:
            val += float(pr.mayer.value(ro["Z"][-1], pr.t0 + ro["sigma"], ro["s"], pr.p))
        return val

    def gradient(self, x) -> np.ndarray:
        ro = self._rollout(x)
        pr = self.nlp.problem
        g = ro["gq"].copy()
        if pr.mayer:
            tf = pr.t0 + ro["sigma"]
            g += pr.mayer.grad_zf(ro["Z"][-1], tf, ro["s"], pr.p) @ ro["S"][-1]
            if self.free_time:
                g[self.sigma_index] += float(pr.mayer.grad_tf(ro["Z"][-1], tf, ro["s"], pr.p)) * self.nlp.tf_scale
            if self.ns:
                g[self.s_index] += pr.mayer.grad_s(ro["Z"][-1], tf, ro["s"], pr.p)
        return g

    def eq_constraints(self, x) -> np.ndarray:
        if self.me == 0:
            return np.zeros(0)
        ro = self._rollout(x)
        pr = self.nlp.problem
        return pr.boundary.value(ro["Z"][0], ro["Z"][-1], pr.t0 + ro["sigma"], ro["s"], pr.p)

    def eq_jacobian(self, x) -> np.ndarray:
        if self.me == 0:
            return np.zeros((0, self.n_vars))
        ro = self._rollout(x)
        pr = self.nlp.problem
        d_z0, d_zf, d_tf, d_s = pr.boundary.jac(ro["Z"][0], ro["Z"][-1],
                                                pr.t0 + ro["sigma"], ro["s"], pr.p)
        J = d_zf @ ro["S"][-1]
        J[:, :self.nz] += d_z0
        if self.free_time:
            J[:, self.sigma_index] += d_tf * self.nlp.tf_scale
        if self.ns:
            J[:, self.s_index] += d_s
        return J

    def ineq_constraints(self, x) -> np.ndarray:
        ro = self._rollout(x)
        pr = self.nlp.problem
        Z, sigma, s = ro["Z"], ro["sigma"], ro["s"]
        tt = pr.t0 + sigma * self.nlp.tau
        parts = []
        for pc in pr.path:
            parts.append(pc.value(tt, Z, s, pr.p).ravel())
            if self.midpoints:
                Zm = 0.5 * (Z[:-1] + Z[1:])
                tm = pr.t0 + sigma * 0.5 * (self.nlp.tau[:-1] + self.nlp.tau[1:])
                parts.append(pc.value(tm, Zm, s, pr.p).ravel())
        for i, lo in self.state_lo:
            parts.append(lo - Z[1:, i])
        for i, hi in self.state_hi:
            parts.append(Z[1:, i] - hi)
        return np.concatenate(parts) if parts else np.zeros(0)

    def ineq_jacobian(self, x) -> np.ndarray:
        ro = self._rollout(x)
        pr = self.nlp.problem
        Z, S, sigma, s = ro["Z"], ro["S"], ro["sigma"], ro["s"]
        tau = self.nlp.tau
        tt = pr.t0 + sigma * tau
        blocks = []
        for pc in pr.path:
            dZ, dS, dT = pc.jac(tt, Z, s, pr.p)
            J = np.einsum("ngz,nzc->ngc", dZ, S).reshape(self.N * pc.ng, self.n_vars)
            if self.ns:
                J[:, self.s_index] += dS.reshape(self.N * pc.ng, self.ns)
            if self.free_time:
                J[:, self.sigma_index] += (dT * tau[:, None]).ravel() * self.nlp.tf_scale
            blocks.append(J)
            if self.midpoints:
                Zm = 0.5 * (Z[:-1] + Z[1:])
                tau_m = 0.5 * (tau[:-1] + tau[1:])
                tm = pr.t0 + sigma * tau_m
                Sm = 0.5 * (S[:-1] + S[1:])
                dZm, dSm, dTm = pc.jac(tm, Zm, s, pr.p)
                Jm = np.einsum("ngz,nzc->ngc", dZm, Sm).reshape((self.N - 1) * pc.ng,
                                                                self.n_vars)
                if self.ns:
                    Jm[:, self.s_index] += dSm.reshape((self.N - 1) * pc.ng, self.ns)
                if self.free_time:
                    Jm[:, self.sigma_index] += (dTm * tau_m[:, None]).ravel() * self.nlp.tf_scale
                blocks.append(Jm)
        for i, _ in self.state_lo:
            blocks.append(-S[1:, i, :])
        for i, _ in self.state_hi:
            blocks.append(S[1:, i, :])
        return np.vstack(blocks) if blocks else np.zeros((0, self.n_vars))
