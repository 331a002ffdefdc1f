"""Log-barrier interior-point solver for one SCA power-allocation step.

The program solved is

    max  mu1 + mu2
    s.t. tr(Lambda P) <= P_T                                (budget)
         P_k / sigma_k^2 >= gamma_k                         (QoS)
         exp(mu1 / beta) - S(P) <= 0                        (SE slack)
         U(mu2, kappa) - S(P) <= 0                          (EE slack, majorised)
         tr(Lambda P) + P_f + chi sum_k g_k(P_k) - kappa <= 0

with S(P) = sum_k log2(1 + P_k / sigma_k^2), U the (first- or second-order)
expansion of exp(mu2 / (1 - beta)) kappa around the local point and g_k the
tangent of log2(1 + P_k / sigma_k^2) at P_k^(l).

Internally the variables are scaled: z_k = Lambda_kk P_k / P_T (share of the
budget used by user k), nu1 = mu1 / beta and nu2 = mu2 / (1 - beta).  The SE
slack is dropped at beta = 0 and the two EE constraints at beta = 1.

The problem has at most K + 3 variables, so every Newton step is a tiny dense
solve; the inner loops are compiled with numba to keep SCA affordable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numba as nb
import numpy as np
from scipy.optimize import nnls

from .errors import Infeasible

LN2 = math.log(2.0)

T0 = 1.0
T_FACTOR = 10.0
GAP_TOL = 1e-9
NEWTON_TOL = 1e-10
POLISH_TOL = 1e-24
MAX_NEWTON = 50
LS_ALPHA = 0.25
LS_BETA = 0.5
PHASE1_BOX = 1e3

# slots of the packed scalar parameter vector
_PT, _PF, _CHI, _G0, _BETA, _NU2L, _KL, _E0, _U0, _DELTA, _Q2 = range(11)


@dataclass(frozen=True)
class SubproblemSpec:
    """Data of one convex power subproblem.

    ``Lambda`` is the K x K ZF coupling matrix (only its diagonal enters);
    the local point ``(mu2_local, kappa_local, P_local)`` fixes the expansions.
    ``delta = 0`` selects the first-order expansion of exp(mu2/(1-beta)) kappa.
    """

    Lambda: np.ndarray
    noise: np.ndarray
    sinr_threshold: np.ndarray
    power_budget: float
    beta: float
    mu2_local: float
    kappa_local: float
    P_local: np.ndarray
    delta: float = 0.0
    fixed_circuit_power: float = 0.1
    rate_power_coeff: float = 0.1

    @property
    def K(self) -> int:
        return len(self.noise)

    @property
    def lambda_diag(self) -> np.ndarray:
        return np.real(np.diag(np.atleast_2d(self.Lambda)))

    @property
    def power_floor(self) -> np.ndarray:
        return np.asarray(self.sinr_threshold, float) * np.asarray(self.noise, float)


@dataclass
class SubproblemSolution:
    P: np.ndarray
    mu1: float
    mu2: float
    kappa: float
    objective: float
    kkt_residual: float
    status: str
    residuals: dict = field(default_factory=dict)
    newton_steps: int = 0
    barrier_history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# compiled kernels
#
# mode 0: the subproblem itself.  mode 1: phase I on w = (v, s) with
# constraints f(v) - s, a box around ``ref`` and s >= -10.

@nb.njit(cache=True)
def _main_values(v, c, zfloor, gs, prm, K, i1, i2, ik, f):
    S = 0.0
    sz = 0.0
    lin = 0.0
    for k in range(K):
        x = 1.0 + c[k] * v[k]
        if x <= 0.0:
            return False
        S += math.log(x)
        sz += v[k]
        lin += gs[k] * v[k]
    S /= LN2
    f[0] = sz - 1.0
    for k in range(K):
        f[1 + k] = zfloor[k] - v[k]
    row = 1 + K
    if i1 >= 0:
        f[row] = math.exp(v[i1]) - S
        row += 1
    if i2 >= 0:
        dn = v[i2] - prm[_NU2L]
        dk = v[ik] - prm[_KL]
        U = prm[_U0] + prm[_U0] * dn + prm[_E0] * dk + 0.5 * (prm[_Q2] * dn * dn + prm[_DELTA] * dk * dk)
        f[row] = U - S
        f[row + 1] = prm[_PT] * sz + prm[_PF] + prm[_CHI] * (prm[_G0] + lin) - v[ik]
    return True


@nb.njit(cache=True)
def _main_jac(v, c, gs, prm, K, i1, i2, ik, J):
    J[:, :] = 0.0
    for k in range(K):
        J[0, k] = 1.0
        J[1 + k, k] = -1.0
    row = 1 + K
    if i1 >= 0:
        for k in range(K):
            J[row, k] = -c[k] / (LN2 * (1.0 + c[k] * v[k]))
        J[row, i1] = math.exp(v[i1])
        row += 1
    if i2 >= 0:
        for k in range(K):
            J[row, k] = -c[k] / (LN2 * (1.0 + c[k] * v[k]))
            J[row + 1, k] = prm[_PT] + prm[_CHI] * gs[k]
        J[row, i2] = prm[_U0] + prm[_Q2] * (v[i2] - prm[_NU2L])
        J[row, ik] = prm[_E0] + prm[_DELTA] * (v[ik] - prm[_KL])
        J[row + 1, ik] = -1.0


@nb.njit(cache=True)
def _main_hess(v, w, c, prm, K, i1, i2, ik, H):
    """H = sum_i w_i * Hessian(f_i); only the SE and EE slack rows are curved."""
    H[:, :] = 0.0
    row = 1 + K
    wz = 0.0
    if i1 >= 0:
        wz += w[row]
        H[i1, i1] += w[row] * math.exp(v[i1])
        row += 1
    if i2 >= 0:
        wz += w[row]
        H[i2, i2] += w[row] * prm[_Q2]
        H[ik, ik] += w[row] * prm[_DELTA]
    for k in range(K):
        x = 1.0 + c[k] * v[k]
        H[k, k] += wz * c[k] * c[k] / (LN2 * x * x)


@nb.njit(cache=True)
def _values(mode, w, c, zfloor, gs, prm, K, i1, i2, ik, n, m0, ref, f, fm):
    if mode == 0:
        return _main_values(w, c, zfloor, gs, prm, K, i1, i2, ik, f)
    ok = _main_values(w[:n], c, zfloor, gs, prm, K, i1, i2, ik, fm)
    if not ok:
        return False
    s = w[n]
    for i in range(m0):
        f[i] = fm[i] - s
    for j in range(n):
        d = w[j] - ref[j]
        f[m0 + j] = d * d - PHASE1_BOX * PHASE1_BOX
    f[m0 + n] = -s - 10.0
    return True


@nb.njit(cache=True)
def _jac(mode, w, c, gs, prm, K, i1, i2, ik, n, m0, ref, J, Jm):
    if mode == 0:
        _main_jac(w, c, gs, prm, K, i1, i2, ik, J)
        return
    _main_jac(w[:n], c, gs, prm, K, i1, i2, ik, Jm)
    J[:, :] = 0.0
    for i in range(m0):
        for j in range(n):
            J[i, j] = Jm[i, j]
        J[i, n] = -1.0
    for j in range(n):
        J[m0 + j, j] = 2.0 * (w[j] - ref[j])
    J[m0 + n, n] = -1.0


@nb.njit(cache=True)
def _hess(mode, w, wt, c, prm, K, i1, i2, ik, n, m0, H, Hm):
    if mode == 0:
        _main_hess(w, wt, c, prm, K, i1, i2, ik, H)
        return
    _main_hess(w[:n], wt[:m0], c, prm, K, i1, i2, ik, Hm)
    H[:, :] = 0.0
    for a in range(n):
        for b in range(n):
            H[a, b] = Hm[a, b]
        H[a, a] += 2.0 * wt[m0 + a]


@nb.njit(cache=True)
def _barrier_kernel(mode, obj, w, t0, c, zfloor, gs, prm, K, i1, i2, ik, n, m0, ref,
                    newton_tol, polish_tol, gap_tol, t_factor, max_newton, ls_alpha, ls_beta):
    """Minimise obj.w over {f(w) < 0} by the barrier method.

    Returns (w, t, steps, stalled, dphi, stage) where ``dphi[i]`` is the
    barrier-objective change of Newton step i taken in centring stage
    ``stage[i]``.  Phase I (mode 1) returns as soon as f(v) < 0.
    """
    nv = w.size
    m = m0 if mode == 0 else m0 + n + 1
    f = np.empty(m)
    fn = np.empty(m)
    fm = np.empty(m0)
    J = np.empty((m, nv))
    Jm = np.empty((m0, n))
    H = np.empty((nv, nv))
    Hm = np.empty((n, n))
    r = np.empty(m)
    maxsteps = 64 * max_newton
    dphi = np.zeros(maxsteps)
    stage_of = np.zeros(maxsteps, dtype=np.int64)
    steps = 0
    stalled = False
    t = t0
    stage = 0
    _values(mode, w, c, zfloor, gs, prm, K, i1, i2, ik, n, m0, ref, f, fm)
    while True:
        tol = polish_tol if m / t < gap_tol else newton_tol
        for _ in range(max_newton):
            _jac(mode, w, c, gs, prm, K, i1, i2, ik, n, m0, ref, J, Jm)
            for i in range(m):
                r[i] = 1.0 / (-f[i])
            _hess(mode, w, r, c, prm, K, i1, i2, ik, n, m0, H, Hm)
            grad = t * obj + J.T @ r
            for i in range(m):
                for a in range(nv):
                    ja = J[i, a] * r[i]
                    if ja != 0.0:
                        for b in range(nv):
                            H[a, b] += ja * J[i, b] * r[i]
            dv = -np.linalg.solve(H, grad)
            slope = grad @ dv
            if -slope / 2.0 <= tol:
                break
            s = 1.0
            accepted = False
            d = 0.0
            while s >= 1e-14:
                wn = w + s * dv
                if _values(mode, wn, c, zfloor, gs, prm, K, i1, i2, ik, n, m0, ref, fn, fm):
                    feas = True
                    for i in range(m):
                        if not fn[i] < 0.0:
                            feas = False
                            break
                    if feas:
                        d = t * (obj @ (wn - w))
                        for i in range(m):
                            d -= math.log(fn[i] / f[i])
                        if d <= ls_alpha * s * slope:
                            accepted = True
                            break
                s *= ls_beta
            if not accepted:
                stalled = tol == newton_tol
                break
            w = wn
            f[:] = fn
            if steps < maxsteps:
                dphi[steps] = d
                stage_of[steps] = stage
            steps += 1
            if mode == 1:
                done = True
                for i in range(m0):
                    if not fm[i] < 0.0:
                        done = False
                        break
                if done:
                    return w, t, steps, stalled, dphi, stage_of
        if m / t < gap_tol:
            return w, t, steps, stalled, dphi, stage_of
        t *= t_factor
        stage += 1


class _Problem:
    """Scaled data of one subproblem plus thin wrappers around the kernels."""

    def __init__(self, spec: SubproblemSpec):
        b = float(spec.beta)
        if not 0.0 <= b <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        lam = spec.lambda_diag
        sig = np.asarray(spec.noise, float)
        PT = float(spec.power_budget)
        self.K = K = len(sig)
        self.beta, self.PT = b, PT
        self.lam, self.sig = lam, sig
        self.c = PT / (lam * sig)                       # SINR per unit share
        self.zfloor = spec.power_floor * lam / PT
        self.has_se = b > 0
        self.has_ee = b < 1
        n = K
        self.i1 = self.i2 = self.ik = -1
        if self.has_se:
            self.i1, n = n, n + 1
        if self.has_ee:
            self.i2, self.ik, n = n, n + 1, n + 2
        self.n = n
        self.names = ["budget"] + [f"qos[{k}]" for k in range(K)]
        if self.has_se:
            self.names.append("se_slack")
        if self.has_ee:
            self.names += ["ee_slack", "power_slack"]
        self.m = len(self.names)
        obj = np.zeros(n)
        if self.has_se:
            obj[self.i1] = b
        if self.has_ee:
            obj[self.i2] = 1 - b
        self.obj = obj
        prm = np.zeros(11)
        prm[_PT], prm[_PF], prm[_CHI], prm[_BETA] = PT, spec.fixed_circuit_power, spec.rate_power_coeff, b
        self.gs = np.zeros(K)
        if self.has_ee:
            Pl = np.asarray(spec.P_local, float)
            prm[_NU2L] = spec.mu2_local / (1 - b)
            prm[_KL] = spec.kappa_local
            prm[_E0] = math.exp(prm[_NU2L])
            prm[_U0] = prm[_E0] * prm[_KL]
            prm[_DELTA] = spec.delta
            prm[_Q2] = spec.delta * (1 - b) ** 2       # curvature in nu2
            # power constraint is linear in z: PT sum z + Pf + chi (g0 + gs.z) - kappa
            self.gs = PT / (lam * LN2 * (sig + Pl))
            prm[_G0] = float(np.sum(np.log1p(Pl / sig) / LN2 - Pl / (LN2 * (sig + Pl))))
        self.prm = prm
        self._ref = np.zeros(n)

    def _args(self):
        return self.c, self.zfloor, self.gs, self.prm, self.K, self.i1, self.i2, self.ik

    # -- evaluation ---------------------------------------------------------
    def S(self, z):
        return float(np.sum(np.log1p(self.c * np.asarray(z))) / LN2)

    def pow_lin(self, z):
        p = self.prm
        return p[_PT] * float(np.sum(z)) + p[_PF] + p[_CHI] * (p[_G0] + float(self.gs @ z))

    def U(self, nu2, kappa):
        p = self.prm
        dn, dk = nu2 - p[_NU2L], kappa - p[_KL]
        return p[_U0] + p[_U0] * dn + p[_E0] * dk + 0.5 * (p[_Q2] * dn * dn + p[_DELTA] * dk * dk)

    def values(self, v):
        f = np.empty(self.m)
        if not _main_values(np.asarray(v, float), self.c, self.zfloor, self.gs, self.prm,
                            self.K, self.i1, self.i2, self.ik, f):
            f[:] = np.inf
        return f

    def jacobian(self, v):
        J = np.empty((self.m, self.n))
        _main_jac(np.asarray(v, float), self.c, self.gs, self.prm, self.K, self.i1, self.i2, self.ik, J)
        return J

    def hessian(self, v, i: int):
        """Hessian of constraint i."""
        w = np.zeros(self.m)
        w[i] = 1.0
        H = np.empty((self.n, self.n))
        _main_hess(np.asarray(v, float), w, self.c, self.prm, self.K, self.i1, self.i2, self.ik, H)
        return H

    # -- start point --------------------------------------------------------
    def interior_start(self, z_local) -> Optional[np.ndarray]:
        """Strictly feasible point near the local point (moved slightly inwards)."""
        K, p = self.K, self.prm
        spare = 1.0 - float(np.sum(self.zfloor))
        if spare <= 0:
            return None
        centre = self.zfloor + spare / (K + 1)
        zl = np.clip(np.asarray(z_local, float), self.zfloor, None)
        if np.sum(zl) > 1:
            zl = self.zfloor + (zl - self.zfloor) * spare / max(np.sum(zl - self.zfloor), 1e-300)
        for theta in (1e-3, 1e-2, 0.1, 0.5, 1.0):
            z = (1 - theta) * zl + theta * centre
            v = np.zeros(self.n)
            v[:K] = z
            S = self.S(z)
            if S <= 0:
                continue
            if self.has_se:
                v[self.i1] = math.log(S) - 1e-3
            if self.has_ee:
                kap = self.pow_lin(z)
                kap += 1e-3 * max(1.0, abs(kap))
                v[self.ik] = kap
                dk = kap - p[_KL]
                rest = p[_U0] + p[_E0] * dk + 0.5 * p[_DELTA] * dk * dk - (S - 1e-6 * max(1.0, S))
                if p[_Q2] > 0:
                    # U is a parabola in nu2; use its vertex if it dips below S
                    dn = -p[_U0] / p[_Q2]
                    if 0.5 * p[_Q2] * dn * dn + p[_U0] * dn + rest >= 0:
                        continue
                else:
                    dn = -rest / p[_U0] - 1e-3
                v[self.i2] = p[_NU2L] + dn
            if np.all(self.values(v) < 0):
                return v
        return None

    def barrier(self, mode, obj, w, ref=None):
        ref = self._ref if ref is None else ref
        return _barrier_kernel(mode, obj, np.array(w, float), T0, *self._args(), self.n, self.m, ref,
                               NEWTON_TOL, POLISH_TOL, GAP_TOL, T_FACTOR, MAX_NEWTON, LS_ALPHA, LS_BETA)

    def phase_one(self, v0: np.ndarray) -> np.ndarray:
        """Minimise s subject to f_i(v) <= s inside a box around ``v0``."""
        f0 = self.values(v0)
        if not np.all(np.isfinite(f0)):
            raise Infeasible("phase I start is outside the domain")
        w = np.append(v0, float(np.max(f0)) + 1.0)
        obj = np.zeros(self.n + 1)
        obj[-1] = 1.0
        w, *_ = self.barrier(1, obj, w, ref=np.asarray(v0, float))
        v = w[:self.n]
        if not np.all(self.values(v) < 0):
            raise Infeasible("no strictly feasible point for the power subproblem")
        return v


def kkt_residual(obj, f, J, active_tol: float = 1e-6) -> float:
    """KKT residual of ``max obj.v s.t. f(v) <= 0`` at a point.

    Multipliers of the near-active constraints are fitted by non-negative
    least squares (barrier duals 1/(t r) are too noisy once r ~ 1e-10);
    the residual is the worst of stationarity, complementarity and primal
    infeasibility.
    """
    act = np.flatnonzero(f > -active_tol)
    lam = np.zeros(len(f))
    if act.size:
        lam[act], _ = nnls(J[act].T, obj)
    stat = float(np.max(np.abs(J.T @ lam - obj)))
    comp = float(np.max(np.abs(lam * f)))
    return max(stat, comp, float(max(0.0, np.max(f))))


def solve_subproblem(spec: SubproblemSpec) -> SubproblemSolution:
    """Solve the convex power subproblem by a log-barrier interior-point method.

    Starts from a strictly feasible point next to the local point (generic
    phase I if that fails), then runs centring stages with t multiplied by 10
    until (#constraints)/t < 1e-9.

    Raises
    ------
    Infeasible
        If QoS floors exceed the budget or no strictly feasible point exists.
    """
    prob = _Problem(spec)
    if float(np.sum(prob.zfloor)) >= 1.0:
        raise Infeasible(f"QoS floors need {np.sum(prob.zfloor) * prob.PT:.4g} W > P_T")
    zl = np.asarray(spec.P_local, float) * prob.lam / prob.PT
    v0 = prob.interior_start(zl)
    if v0 is None:
        v0 = np.zeros(prob.n)
        v0[:prob.K] = prob.zfloor + (1 - np.sum(prob.zfloor)) / (prob.K + 1)
        if prob.has_ee:
            v0[prob.ik] = prob.pow_lin(v0[:prob.K])
            v0[prob.i2] = prob.prm[_NU2L]
        v0 = prob.phase_one(v0)
    v, t, steps, stalled, dphi, stage = prob.barrier(0, -prob.obj, v0)
    f = prob.values(v)
    kkt = kkt_residual(prob.obj, f, prob.jacobian(v))
    hist = [dphi[:steps][stage[:steps] == s].tolist() for s in range(int(stage[:steps].max(initial=0)) + 1)]
    K = prob.K
    P = v[:K] * prob.PT / prob.lam
    mu1 = prob.beta * v[prob.i1] if prob.has_se else 0.0
    mu2 = (1 - prob.beta) * v[prob.i2] if prob.has_ee else 0.0
    kappa = float(v[prob.ik]) if prob.has_ee else float("nan")
    return SubproblemSolution(P, float(mu1), float(mu2), kappa, float(mu1 + mu2), kkt,
                              "stalled" if stalled else "optimal",
                              dict(zip(prob.names, f.tolist())), int(steps), hist)


def constraint_values(spec: SubproblemSpec, P, mu1: float, mu2: float, kappa: float) -> dict:
    """Constraint residuals (<= 0 means satisfied) at a candidate point."""
    prob = _Problem(spec)
    v = np.zeros(prob.n)
    v[:prob.K] = np.asarray(P, float) * prob.lam / prob.PT
    if prob.has_se:
        v[prob.i1] = mu1 / prob.beta
    if prob.has_ee:
        v[prob.i2] = mu2 / (1 - prob.beta)
        v[prob.ik] = kappa
    return dict(zip(prob.names, prob.values(v).tolist()))


def hessian_delta(mu2: float, kappa: float, beta: float) -> float:
    """Largest eigenvalue of the Hessian of exp(mu2/(1-beta)) kappa (closed form)."""
    e = math.exp(mu2 / (1 - beta))
    a = e * kappa / (1 - beta) ** 2
    b = e / (1 - beta)
    return 0.5 * (a + math.sqrt(a * a + 4 * b * b))
