"""Multi-user design: ZF precoding, SCA power allocation and PSO placement.

Under ZF the SINR of user k is P_k / sigma_k^2 and the transmit power is
tr(Lambda P) with Lambda = (Psi^H Psi)^{-1}.  The joint problem is solved by
block coordinate descent: SCA over P for a fixed layout, then an element-wise
PSO sweep over the PA positions that lowers tr(Lambda P) for a fixed P.

``Psi^H Psi = sum_m a_m a_m^H`` where ``a_m`` (a K-vector) collects the
contributions of the PAs on waveguide m; moving one PA only changes one
``a_m``, which is what makes the Sherman-Morrison evaluation cheap.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numba as nb
import numpy as np

from .convex import SubproblemSpec, hessian_delta, solve_subproblem
from .errors import EmptyFeasibleRange, Infeasible, RankDeficient
from .model import (ChannelState, PinchLayout, SystemParams, UserSet, pa_contribution,
                    se_ee_multi, uniform_layout, weighted_objective)

log = logging.getLogger(__name__)

RANK_TOL = 1e-12
SM_COND_LIMIT = 1e12
MONOTONE_TOL = 1e-9


# ---------------------------------------------------------------------------
# ZF

@dataclass(frozen=True)
class ZfState:
    Psi: np.ndarray
    Lambda: np.ndarray
    W: np.ndarray
    cond: float


def _rank_check(Psi: np.ndarray) -> float:
    M, K = Psi.shape
    if M < K:
        raise RankDeficient(f"ZF needs M >= K (M={M}, K={K})")
    s = np.linalg.svd(Psi, compute_uv=False)
    if s[-1] < RANK_TOL * s[0]:
        raise RankDeficient(f"Psi is rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.3g})")
    return float(s[0] / s[-1]) ** 2


def zf_build(channels: ChannelState, P) -> ZfState:
    """W = Psi (Psi^H Psi)^{-1} P^{1/2}; Lambda is cached."""
    Psi = np.asarray(channels.Psi)
    cond = _rank_check(Psi)
    Lam = np.linalg.inv(Psi.conj().T @ Psi)
    Lam = 0.5 * (Lam + Lam.conj().T)
    W = Psi @ Lam @ np.diag(np.sqrt(np.asarray(P, dtype=float)))
    return ZfState(Psi, Lam, W, cond)


def aggregate_rows(params: SystemParams, layout: PinchLayout, users) -> np.ndarray:
    """M x K array whose row m is a_m = sum_n (PA (m, n) contribution); equals conj(Psi)."""
    xy = users.xy if isinstance(users, UserSet) else np.atleast_2d(users)
    pc = pa_contribution(layout.x, layout.waveguide_y[None, :, None], xy, params)  # N x M x K
    return pc.sum(axis=0)


def lambda_matrix(rows: np.ndarray) -> np.ndarray:
    """(Psi^H Psi)^{-1} from the aggregate rows."""
    _rank_check(rows.conj())
    gram = rows.T @ rows.conj()
    Lam = np.linalg.inv(gram)
    return 0.5 * (Lam + Lam.conj().T)


def zf_lambda(params: SystemParams, layout: PinchLayout, users) -> np.ndarray:
    return lambda_matrix(aggregate_rows(params, layout, users))


def penalized(trace, power_budget: float, tau: float):
    """tr + tau ([tr - P_T]^+)^2."""
    trace = np.asarray(trace, dtype=float)
    return trace + tau * np.maximum(trace - power_budget, 0.0) ** 2


def _trace_direct(B: np.ndarray, a_new: np.ndarray, P: np.ndarray) -> np.ndarray:
    gram = B[None, :, :] + a_new[:, :, None] * a_new[:, None, :].conj()
    inv = np.linalg.inv(gram)
    return np.einsum("lkk,k->l", inv, P).real


class SmEvaluator:
    """tr((Psi^H Psi)^{-1} P) as a function of the new row a_m, for a fixed m.

    B_m = sum_{m' != m} a_{m'} a_{m'}^H is inverted once; each candidate then
    costs O(K^2).  Falls back to direct inversion when B_m is singular or
    badly conditioned (always the case when M = K).
    """

    def __init__(self, rows: np.ndarray, m: int, P):
        self.P = np.asarray(P, dtype=float)
        others = np.delete(rows, m, axis=0)
        self.B = others.T @ others.conj()
        self.direct = others.shape[0] < rows.shape[1]
        if not self.direct:
            c = np.linalg.cond(self.B)
            self.direct = not np.isfinite(c) or c > SM_COND_LIMIT
        if self.direct:
            log.debug("B_m singular or ill-conditioned for m=%d; using direct inversion", m)
        else:
            self.Binv = np.linalg.inv(self.B)
            self.base = float(np.sum(self.P * self.Binv.diagonal().real))

    def __call__(self, a_new) -> np.ndarray:
        a = np.atleast_2d(a_new)
        if self.direct:
            return _trace_direct(self.B, a, self.P)
        u = a @ self.Binv.T
        quad = np.sum(self.P * np.abs(u) ** 2, axis=1)
        den = 1.0 + np.sum(a.conj() * u, axis=1).real
        return self.base - quad / den


def trace_objective_sm(rows: np.ndarray, m: int, a_new, P, power_budget: Optional[float] = None,
                       tau: float = 0.0):
    """Trace objective with row m replaced by ``a_new`` (K or L x K), optionally penalised."""
    val = SmEvaluator(rows, m, P)(a_new)
    if tau > 0 and power_budget is not None:
        val = penalized(val, power_budget, tau)
    return val if np.ndim(a_new) > 1 else float(val[0])


# ---------------------------------------------------------------------------
# PSO

@dataclass(frozen=True)
class PsoConfig:
    """Swarm settings; ``stall_iterations`` (optional) stops a swarm early once
    the global best has not moved for that many iterations."""

    particles: int = 30
    iterations: int = 300
    inertia: float = 0.7298
    cognitive: float = 1.4962
    social: float = 1.4962
    tau: float = 1e4
    velocity_clamp: float = 0.5
    tol: float = 1e-6
    max_sweeps: int = 50
    stall_iterations: Optional[int] = None

    def __post_init__(self):
        if self.particles < 1 or self.iterations < 1:
            raise ValueError("PSO needs at least one particle and one iteration")
        if not 0 < self.inertia < 1:
            raise ValueError("inertia must lie in (0, 1)")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")


def _pso_draws(lo: float, hi: float, cfg: PsoConfig, rng: np.random.Generator):
    """All random numbers one swarm consumes, drawn up front."""
    L = cfg.particles
    vmax = cfg.velocity_clamp * (hi - lo)
    x0 = rng.uniform(lo, hi, L)
    v0 = rng.uniform(-vmax, vmax, L)
    r = rng.random((cfg.iterations, 2, L))
    return x0, v0, r


def pso_minimize(fun, lo: float, hi: float, incumbent: float, cfg: PsoConfig,
                 rng: np.random.Generator):
    """1-D bound-constrained PSO; particle 0 starts at ``incumbent``.

    ``fun`` maps an array of positions to objective values.  Returns
    ``(best_x, best_f)``.
    """
    vmax = cfg.velocity_clamp * (hi - lo)
    x, v, r = _pso_draws(lo, hi, cfg, rng)
    x[0] = incumbent
    f = fun(x)
    pbest, pf = x.copy(), f.copy()
    g = int(np.argmin(pf))
    gx, gf = pbest[g], pf[g]
    still = 0
    for it in range(cfg.iterations):
        r1, r2 = r[it, 0], r[it, 1]
        v = cfg.inertia * v + cfg.cognitive * r1 * (pbest - x) + cfg.social * r2 * (gx - x)
        np.clip(v, -vmax, vmax, out=v)
        x = x + v
        low, high = x < lo, x > hi
        x[low] = 2 * lo - x[low]
        x[high] = 2 * hi - x[high]
        v[low | high] *= -1
        np.clip(x, lo, hi, out=x)
        f = fun(x)
        better = f < pf
        pbest[better], pf[better] = x[better], f[better]
        g = int(np.argmin(pf))
        if pf[g] < gf:
            gx, gf = pbest[g], pf[g]
            still = 0
        else:
            still += 1
            if cfg.stall_iterations is not None and still >= cfg.stall_iterations:
                break
    return float(gx), float(gf)


# Compiled twin of ``pso_minimize`` specialised to the per-PA trace objective.
# It consumes the same draws, so both give the same result up to rounding.

@nb.njit(cache=True)
def _pa_objective(xc, rest, y, ux, uy, geo, direct, Binv, base, B, P, PT, tau, a, u, G):
    K = rest.size
    for k in range(K):
        dx = ux[k] - xc
        dy = uy[k] - y
        d = math.sqrt(dx * dx + dy * dy + geo[0] * geo[0])
        ph = 2 * math.pi * d / geo[1] + 2 * math.pi * (xc + geo[3]) / geo[2]
        a[k] = rest[k] + geo[4] * complex(math.cos(ph), -math.sin(ph)) / d
    if direct:
        for i in range(K):
            for j in range(K):
                G[i, j] = B[i, j] + a[i] * np.conj(a[j])
        inv = np.linalg.inv(G)
        tr = 0.0
        for k in range(K):
            tr += P[k] * inv[k, k].real
    else:
        quad = 0.0
        den = 1.0
        for i in range(K):
            acc = 0j
            for j in range(K):
                acc += Binv[i, j] * a[j]
            u[i] = acc
            quad += P[i] * (acc.real * acc.real + acc.imag * acc.imag)
            den += (np.conj(a[i]) * acc).real
        tr = base - quad / den
    over = tr - PT
    if over > 0:
        tr += tau * over * over
    return tr


@nb.njit(cache=True)
def _pso_pa_kernel(lo, hi, incumbent, x, v, r, w_in, c1, c2, vmax, stall,
                   rest, y, ux, uy, geo, direct, Binv, base, B, P, PT, tau):
    L = x.size
    K = rest.size
    a = np.empty(K, dtype=np.complex128)
    u = np.empty(K, dtype=np.complex128)
    G = np.empty((K, K), dtype=np.complex128)
    x = x.copy()
    v = v.copy()
    x[0] = incumbent
    f = np.empty(L)
    for i in range(L):
        f[i] = _pa_objective(x[i], rest, y, ux, uy, geo, direct, Binv, base, B, P, PT, tau, a, u, G)
    inc = f[0]
    pbest = x.copy()
    pf = f.copy()
    g = np.argmin(pf)
    gx, gf = pbest[g], pf[g]
    still = 0
    for it in range(r.shape[0]):
        for i in range(L):
            vi = w_in * v[i] + c1 * r[it, 0, i] * (pbest[i] - x[i]) + c2 * r[it, 1, i] * (gx - x[i])
            vi = min(max(vi, -vmax), vmax)
            xi = x[i] + vi
            if xi < lo:
                xi = 2 * lo - xi
                vi = -vi
            elif xi > hi:
                xi = 2 * hi - xi
                vi = -vi
            x[i] = min(max(xi, lo), hi)
            v[i] = vi
            fi = _pa_objective(x[i], rest, y, ux, uy, geo, direct, Binv, base, B, P, PT, tau, a, u, G)
            if fi < pf[i]:
                pbest[i] = x[i]
                pf[i] = fi
        g = np.argmin(pf)
        if pf[g] < gf:
            gx, gf = pbest[g], pf[g]
            still = 0
        else:
            still += 1
            if stall > 0 and still >= stall:
                break
    return gx, gf, inc


def feasible_range(col: np.ndarray, n: int, min_spacing: float, region_x: float):
    """S_{m,n}: the interval PA n may occupy with its neighbours held fixed."""
    lo = col[n - 1] + min_spacing if n > 0 else 0.0
    hi = col[n + 1] - min_spacing if n < len(col) - 1 else region_x
    return max(lo, 0.0), min(hi, region_x)


def _rng_for(seed, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(abs(s)) for s in (seed, *keys)]))


def pso_optimize_pa(params: SystemParams, layout: PinchLayout, users, P, cfg: PsoConfig = PsoConfig(),
                    seed: int = 0, outer: int = 0, history: Optional[list] = None,
                    compiled: bool = True) -> PinchLayout:
    """Element-wise PSO sweeps over all PAs minimising the penalised trace.

    A PSO winner replaces the incumbent only if it strictly lowers the
    objective.  Sweeps repeat until the fractional decrease drops below
    ``cfg.tol``.  ``history`` receives the objective after every sweep
    (preceded by the starting value).  ``compiled=False`` runs the plain
    numpy swarm instead of the numba kernel (same draws, same result).
    """
    xy = users.xy if isinstance(users, UserSet) else np.atleast_2d(users)
    ux, uy = np.ascontiguousarray(xy[:, 0]), np.ascontiguousarray(xy[:, 1])
    P = np.asarray(P, dtype=float)
    PT, tau = params.power_budget, cfg.tau
    geo = np.array([params.height, params.wavelength, params.guided_wavelength,
                    params.region_x / 2, math.sqrt(params.eta)])
    stall = cfg.stall_iterations or 0
    x = np.array(layout.x)
    N, M = x.shape
    y = layout.waveguide_y
    pc = pa_contribution(x, y[None, :, None], xy, params)           # N x M x K
    rows = pc.sum(axis=0)
    current = float(penalized(np.sum(P * lambda_matrix(rows).diagonal().real), PT, tau))
    if history is not None:
        history.append(current)
    for sweep in range(cfg.max_sweeps):
        start = current
        for m in range(M):
            ev = SmEvaluator(rows, m, P)
            Binv = ev.B if ev.direct else ev.Binv
            base = 0.0 if ev.direct else ev.base
            for n in range(N):
                lo, hi = feasible_range(x[:, m], n, params.min_spacing, params.region_x)
                if hi < lo - 1e-12:
                    raise EmptyFeasibleRange(f"S[{m},{n}] = [{lo}, {hi}] is empty")
                if hi - lo <= 0:
                    continue
                rest = rows[m] - pc[n, m]
                rng = _rng_for(seed, outer, sweep, m, n)
                if compiled:
                    x0, v0, r = _pso_draws(lo, hi, cfg, rng)
                    bx, bf, inc = _pso_pa_kernel(
                        lo, hi, x[n, m], x0, v0, r, cfg.inertia, cfg.cognitive, cfg.social,
                        cfg.velocity_clamp * (hi - lo), stall, rest, float(y[m]), ux, uy, geo,
                        ev.direct, Binv, base, ev.B, P, PT, tau)
                else:
                    def fun(cand, rest=rest, m=m):
                        a = rest[None, :] + pa_contribution(cand, y[m], xy, params)
                        return penalized(ev(a), PT, tau)

                    inc = float(fun(np.array([x[n, m]]))[0])
                    bx, bf = pso_minimize(fun, lo, hi, x[n, m], cfg, rng)
                if bf < inc:
                    x[n, m] = bx
                    pc[n, m] = pa_contribution(bx, y[m], xy, params)
                    rows[m] = rest + pc[n, m]
        current = float(penalized(np.sum(P * lambda_matrix(rows).diagonal().real), PT, tau))
        if history is not None:
            history.append(current)
        if start - current <= cfg.tol * abs(start):
            break
    return layout.with_x(x)


# ---------------------------------------------------------------------------
# power

def objective_multi(params: SystemParams, lam_diag, P, noise=None) -> float:
    """beta ln SE + (1 - beta) ln EE under ZF with transmit power tr(Lambda P)."""
    se, ee = se_ee_multi(params, P, float(np.dot(lam_diag, P)), noise)
    return weighted_objective(params.beta, se, ee)


@dataclass
class PowerResult:
    P: np.ndarray
    mu1: float
    mu2: float
    kappa: float
    objective: float
    SE: float
    EE: float
    sca_objectives: list
    true_objectives: list
    iterations: int
    converged: bool
    kkt_residuals: list = field(default_factory=list)
    non_monotone: bool = False


def sca_start(params: SystemParams, lam_diag, noise, gamma) -> np.ndarray:
    """QoS floor plus an equal share of the remaining budget for every user."""
    floor = gamma * noise
    spare = params.power_budget - float(lam_diag @ floor)
    if spare < 0:
        raise Infeasible(f"QoS needs {lam_diag @ floor:.4g} W > P_T = {params.power_budget:.4g} W")
    return floor + spare / (len(floor) * lam_diag)


def _sca_settled(vals, tol: float) -> bool:
    """Fractional-increase test on the true objective sequence.

    MM iterations converge linearly, so a small last step can still leave a
    sizeable gap.  The test therefore bounds the last increase plus the
    geometric tail d * r / (1 - r), with r the ratio of the last two steps.
    """
    if len(vals) < 3:
        return False
    d1, d0 = vals[-1] - vals[-2], vals[-2] - vals[-3]
    scale = tol * abs(vals[-2])
    if abs(d1) > scale:
        return False
    if d0 <= 0 or d1 <= 0:
        return True
    r = min(d1 / d0, 0.999)
    return d1 + d1 * r / (1 - r) <= scale


def sca_power(params: SystemParams, Lam, warm_start=None, order: int = 1, tol: float = 1e-6,
              max_iter: int = 1000) -> PowerResult:
    """SCA over the power allocation for a fixed layout.

    Each iteration re-tightens the slacks at the current P (kappa from the
    power expression, mu2 = (1 - beta) ln EE), solves the convex subproblem and
    stops once the true objective has settled to ``tol`` (fractional, see
    ``_sca_settled``).  The iterate with the best true objective is returned, so
    the result never falls below the warm start.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    lam = np.real(np.diag(np.atleast_2d(Lam)))
    K = lam.size
    noise, gamma = params.noise_vector(K), params.sinr_vector(K)
    floor = gamma * noise
    if float(lam @ floor) > params.power_budget * (1 + 1e-12):
        raise Infeasible(f"QoS needs {lam @ floor:.4g} W > P_T = {params.power_budget:.4g} W")
    beta = params.beta
    P = sca_start(params, lam, noise, gamma) if warm_start is None else np.asarray(warm_start, float)
    if np.any(P < floor * (1 - 1e-9)) or float(lam @ P) > params.power_budget * (1 + 1e-9):
        P = sca_start(params, lam, noise, gamma)
    best_P, best_obj = P.copy(), objective_multi(params, lam, P, noise)
    sca_vals, true_vals, kkts = [], [best_obj], []
    converged = non_monotone = False
    it = 0
    for it in range(1, max_iter + 1):
        se, ee = se_ee_multi(params, P, float(lam @ P), noise)
        kappa_l = float(lam @ P) + params.fixed_circuit_power + params.rate_power_coeff * se
        mu2_l = (1 - beta) * math.log(ee) if beta < 1 else 0.0
        delta = hessian_delta(mu2_l, kappa_l, beta) if (order == 2 and beta < 1) else 0.0
        spec = SubproblemSpec(Lam, noise, gamma, params.power_budget, beta, mu2_l, kappa_l, P, delta,
                              params.fixed_circuit_power, params.rate_power_coeff)
        sol = solve_subproblem(spec)
        kkts.append(sol.kkt_residual)
        P = np.maximum(sol.P, floor)
        if float(lam @ P) > params.power_budget:
            P *= params.power_budget / float(lam @ P)
            P = np.maximum(P, floor)
        obj = objective_multi(params, lam, P, noise)
        if obj < true_vals[-1] - MONOTONE_TOL * abs(true_vals[-1]):
            if not non_monotone:
                log.warning("SCA objective decreased by %.3g at iteration %d", true_vals[-1] - obj, it)
            non_monotone = True
        true_vals.append(obj)
        if obj > best_obj:
            best_P, best_obj = P.copy(), obj
        sca_vals.append(sol.objective)
        if _sca_settled(true_vals, tol):
            converged = True
            break
    se, ee = se_ee_multi(params, best_P, float(lam @ best_P), noise)
    kappa = float(lam @ best_P) + params.fixed_circuit_power + params.rate_power_coeff * se
    return PowerResult(best_P, beta * math.log(se) if beta > 0 else 0.0,
                       (1 - beta) * math.log(ee) if beta < 1 else 0.0, kappa, best_obj, se, ee,
                       sca_vals, true_vals, it, converged, kkts, non_monotone)


# ---------------------------------------------------------------------------
# BCD

@dataclass
class BcdTrace:
    """Per-outer-iteration record; entry 0 is the starting point."""

    objective: List[float] = field(default_factory=list)
    trace_power: List[float] = field(default_factory=list)
    se: List[float] = field(default_factory=list)
    ee: List[float] = field(default_factory=list)
    sca_objectives: List[list] = field(default_factory=list)
    pso_objectives: List[list] = field(default_factory=list)

    def append(self, obj, tr, se, ee, sca=None, pso=None):
        self.objective.append(float(obj))
        self.trace_power.append(float(tr))
        self.se.append(float(se))
        self.ee.append(float(ee))
        self.sca_objectives.append(list(sca or []))
        self.pso_objectives.append(list(pso or []))

    def rows(self):
        for q, vals in enumerate(zip(self.objective, self.trace_power, self.se, self.ee)):
            yield (q, *vals, len(self.sca_objectives[q]), len(self.pso_objectives[q]))

    def max_decrease(self) -> float:
        d = np.diff(self.objective)
        return float(max(0.0, -d.min())) if d.size else 0.0


@dataclass
class BcdResult:
    layout: PinchLayout
    P: np.ndarray
    objective: float
    SE: float
    EE: float
    total_power: float
    trace: BcdTrace
    outer_iterations: int
    converged: bool
    wall_time: float


def bcd_solve(params: SystemParams, users, init_layout: Optional[PinchLayout] = None, order: int = 1,
              pso: PsoConfig = PsoConfig(), seed: int = 0, max_outer: int = 50,
              tol: float = 1e-6, sca_tol: float = 1e-6) -> BcdResult:
    """Alternate SCA power allocation and PSO placement until the weighted
    objective improves by less than ``tol`` (fractional) over a full cycle.

    A placement step frees budget that only the next power step can use (at
    beta = 1 it does not move the objective at all), so the stopping test is
    applied from the second cycle on and the result ends with one more power
    step on the final layout.  That step is warm-started and never lowers the
    objective; it is recorded as the last trace entry.
    """
    t0 = time.perf_counter()
    users = users if isinstance(users, UserSet) else UserSet(users)
    layout = uniform_layout(params) if init_layout is None else init_layout
    noise = params.noise_vector(users.K)
    lam = np.real(np.diag(zf_lambda(params, layout, users)))
    P = sca_start(params, lam, noise, params.sinr_vector(users.K))
    trace = BcdTrace()
    se, ee = se_ee_multi(params, P, float(lam @ P), noise)
    trace.append(objective_multi(params, lam, P, noise), lam @ P, se, ee)
    prev = trace.objective[-1]
    converged = False
    q = 0
    for q in range(1, max_outer + 1):
        Lam = zf_lambda(params, layout, users)
        pw = sca_power(params, Lam, P, order=order, tol=sca_tol)
        P = pw.P
        hist: list = []
        layout = pso_optimize_pa(params, layout, users, P, pso, seed=seed, outer=q, history=hist)
        lam = np.real(np.diag(zf_lambda(params, layout, users)))
        obj = objective_multi(params, lam, P, noise)
        se, ee = se_ee_multi(params, P, float(lam @ P), noise)
        trace.append(obj, lam @ P, se, ee, pw.sca_objectives, hist)
        if q > 1 and obj - prev <= tol * abs(prev):
            converged = True
            break
        prev = obj
    Lam = zf_lambda(params, layout, users)
    pw = sca_power(params, Lam, P, order=order, tol=sca_tol)
    lam = np.real(np.diag(Lam))
    if pw.objective >= trace.objective[-1]:
        P = pw.P
    se, ee = se_ee_multi(params, P, float(lam @ P), noise)
    trace.append(objective_multi(params, lam, P, noise), lam @ P, se, ee, pw.sca_objectives)
    return BcdResult(layout, P, trace.objective[-1], se, ee, float(lam @ P), trace, q, converged,
                     time.perf_counter() - t0)


def solve_fixed_layout(params: SystemParams, users, layout: PinchLayout, order: int = 1,
                       sca_tol: float = 1e-6, warm_start=None) -> BcdResult:
    """Power-only optimisation on a given layout (e.g. the uniform baseline)."""
    t0 = time.perf_counter()
    users = users if isinstance(users, UserSet) else UserSet(users)
    Lam = zf_lambda(params, layout, users)
    pw = sca_power(params, Lam, warm_start, order=order, tol=sca_tol)
    lam = np.real(np.diag(Lam))
    trace = BcdTrace()
    trace.append(pw.objective, lam @ pw.P, pw.SE, pw.EE, pw.sca_objectives)
    return BcdResult(layout, pw.P, pw.objective, pw.SE, pw.EE, float(lam @ pw.P), trace, 1,
                     pw.converged, time.perf_counter() - t0)
