"""Brute-force references for cross-checking the fast solvers.

Everything here is deliberately simple and slow, and is written from the
defining formulas rather than by calling the routines it validates.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from .errors import NoZeroInRange, RankDeficient
from .model import SystemParams

EPS_POWER = 1e-12


@dataclass
class OracleReport:
    """One oracle-vs-fast-path comparison."""

    name: str
    oracle_value: float
    fast_value: float
    tolerance: float
    relative: bool = False
    seed: Optional[int] = None
    details: dict = field(default_factory=dict)

    @property
    def abs_error(self) -> float:
        return abs(self.oracle_value - self.fast_value)

    @property
    def rel_error(self) -> float:
        return self.abs_error / max(abs(self.oracle_value), 1e-300)

    @property
    def passed(self) -> bool:
        err = self.rel_error if self.relative else self.abs_error
        return bool(err <= self.tolerance)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(abs_error=self.abs_error, rel_error=self.rel_error, passed=self.passed)
        return d

    def line(self) -> str:
        kind = "rel" if self.relative else "abs"
        err = self.rel_error if self.relative else self.abs_error
        return (f"{'PASS' if self.passed else 'FAIL'} {self.name}: oracle={self.oracle_value:.12g} "
                f"fast={self.fast_value:.12g} {kind}_err={err:.3g} tol={self.tolerance:g}")


# ---------------------------------------------------------------------------
# single-user power

def f2_direct(zeta: float, params: SystemParams, P):
    """beta ln SE + (1 - beta) ln EE written out from the rate and power model."""
    P = np.asarray(P, dtype=float)
    se = np.log1p(zeta * P) / math.log(2.0)
    ee = se / (P + params.fixed_circuit_power + params.rate_power_coeff * se)
    b = params.beta
    out = np.zeros_like(P)
    if b > 0:
        out = out + b * np.log(se)
    if b < 1:
        out = out + (1 - b) * np.log(ee)
    return out


def grid_power_oracle(zeta: float, params: SystemParams, grid_size: int = 10**6,
                      chunk: int = 250_000) -> float:
    """Argmax of the single-user objective over the uniform grid P_T i / n, i = 1..n."""
    if grid_size < 1000:
        raise ValueError("grid_size must be >= 1000")
    PT = params.power_budget
    best_val, best_P = -np.inf, PT
    for start in range(1, grid_size + 1, chunk):
        idx = np.arange(start, min(start + chunk, grid_size + 1), dtype=float)
        P = np.maximum(PT * idx / grid_size, EPS_POWER)
        val = f2_direct(zeta, params, P)
        i = int(np.argmax(val))
        if val[i] > best_val:
            best_val, best_P = float(val[i]), float(P[i])
    return best_P


# ---------------------------------------------------------------------------
# phase alignment

def _received_phase(params: SystemParams, x, y, user) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    pa = np.stack([x, np.full_like(x, y), np.full_like(x, params.height)], axis=-1)
    usr = np.array([user[0], user[1], 0.0])
    d = np.linalg.norm(pa - usr, axis=-1)
    feed = np.linalg.norm(pa - np.array([-params.region_x / 2, y, params.height]), axis=-1)
    return 2 * np.pi * d / params.wavelength + 2 * np.pi * feed / params.guided_wavelength


def alignment_residual(ctx, params: SystemParams, offset):
    """Received-phase difference to the anchor wrapped to (-pi, pi]."""
    offset = np.asarray(offset, dtype=float)
    sign = -1.0 if ctx.direction == "negative-x" else 1.0
    x = ctx.base_x + sign * offset
    phi = _received_phase(params, x, ctx.waveguide_y, ctx.user)
    phi_a = _received_phase(params, np.array(ctx.anchor_x), ctx.anchor_y, ctx.user)
    return np.angle(np.exp(1j * (phi - phi_a)))


def phase_scan_oracle(ctx, params: SystemParams, step: Optional[float] = None,
                      span: Optional[float] = None) -> float:
    """First offset >= ``ctx.min_offset`` at which the PA is phase-aligned.

    Scans with ``step`` (default lambda/200) over ``span`` (default 5
    lambda_g), brackets the first sign change of the wrapped residual that is
    not a wrap-around jump and polishes it by Brent's method.
    """
    step = params.wavelength / 200 if step is None else step
    span = 5 * params.guided_wavelength if span is None else span
    if step > params.wavelength / 100:
        raise ValueError("step must be <= lambda/100")
    lo = ctx.min_offset
    grid = lo + np.arange(0.0, span + step, step)
    r = alignment_residual(ctx, params, grid)
    if abs(r[0]) < 1e-12:
        return float(lo)
    crossing = (np.sign(r[:-1]) != np.sign(r[1:])) & (np.abs(r[1:] - r[:-1]) < np.pi)
    hits = np.flatnonzero(crossing)
    if hits.size == 0:
        raise NoZeroInRange(f"no alignment in [{lo}, {lo + span}]")
    i = int(hits[0])
    if r[i + 1] == 0.0:
        return float(grid[i + 1])
    return float(brentq(lambda t: float(alignment_residual(ctx, params, t)), grid[i], grid[i + 1],
                        xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


# ---------------------------------------------------------------------------
# ZF algebra

def _psi_from(channels) -> np.ndarray:
    return np.asarray(channels.G).conj().T @ np.asarray(channels.H)


def direct_trace_oracle(channels, P) -> float:
    """tr((Psi^H Psi)^{-1} P) by a dense solve; Psi rebuilt from G and H."""
    Psi = _psi_from(channels)
    s = scipy.linalg.svdvals(Psi)
    if Psi.shape[0] < Psi.shape[1] or s[-1] < 1e-12 * s[0]:
        raise RankDeficient("Psi is rank deficient")
    gram = Psi.conj().T @ Psi
    X = scipy.linalg.solve(gram, np.diag(np.asarray(P, dtype=complex)), assume_a="her")
    return float(np.trace(X).real)


def sinr_simulation_oracle(channels, W, noise, trials: int = 10**5, seed: int = 0) -> np.ndarray:
    """Monte Carlo SINR per user from y_k = psi_k^H W s + n_k.

    Unit-power complex Gaussian symbols and AWGN of power ``noise``; the
    SINR is the sample desired power over sample interference plus noise.
    """
    if trials < 10**4:
        raise ValueError("trials must be >= 1e4")
    rng = np.random.default_rng(seed)
    Psi = _psi_from(channels)
    W = np.asarray(W)
    K = W.shape[1]
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (K,))
    s = (rng.standard_normal((K, trials)) + 1j * rng.standard_normal((K, trials))) / math.sqrt(2)
    n = (rng.standard_normal((K, trials)) + 1j * rng.standard_normal((K, trials))) * np.sqrt(noise / 2)[:, None]
    gains = Psi.conj().T @ W                      # K x K, row k = user k
    out = np.empty(K)
    for k in range(K):
        desired = gains[k, k] * s[k]
        interf = gains[k] @ s - desired
        den = np.mean(np.abs(interf + n[k]) ** 2)
        out[k] = np.mean(np.abs(desired) ** 2) / den
    return out


# ---------------------------------------------------------------------------
# convex subproblem

def tight_objective(spec, P):
    """mu1 + mu2 at power ``P`` (shape (..., K)) with the slack variables
    pushed to their limits; -inf where ``P`` is infeasible."""
    P = np.asarray(P, dtype=float)
    lam = np.real(np.diag(np.atleast_2d(spec.Lambda)))
    sig = np.asarray(spec.noise, dtype=float)
    ln2 = math.log(2.0)
    S = np.sum(np.log2(1 + P / sig), axis=-1)
    trace = P @ lam
    ok = np.all(P >= np.asarray(spec.sinr_threshold) * sig, axis=-1) & (trace <= spec.power_budget)
    b = spec.beta
    total = np.zeros_like(S)
    if b > 0:
        total = total + b * np.log(S)
    if b < 1:
        Pl = np.asarray(spec.P_local, dtype=float)
        g = np.log2(1 + Pl / sig) + (P - Pl) / (ln2 * (sig + Pl))
        pw = trace + spec.fixed_circuit_power + spec.rate_power_coeff * np.sum(g, axis=-1)
        a = 1.0 / (1 - b)
        e = math.exp(spec.mu2_local * a)
        u0, um, uk, dlt = e * spec.kappa_local, e * spec.kappa_local * a, e, spec.delta
        kappa = pw if dlt == 0 else np.maximum(pw, spec.kappa_local - uk / dlt)
        dk = kappa - spec.kappa_local
        c0 = u0 + uk * dk + 0.5 * dlt * dk * dk - S
        if dlt == 0:
            dm = -c0 / um
        else:
            disc = um * um - 2 * dlt * c0
            ok &= disc >= 0
            dm = (-um + np.sqrt(np.maximum(disc, 0.0))) / dlt
        total = total + spec.mu2_local + dm
    return np.where(ok, total, -np.inf)


def kernel_grid_oracle(spec, grid: int = 200, zooms: int = 12) -> tuple:
    """Exhaustive search of the K = 2 subproblem over the feasible power set.

    The set {P >= floor, tr(Lambda P) <= P_T} is mapped to (s, theta) in
    [0, 1]^2: s is the share of spare budget used and theta how it splits
    between the users.  A ``grid`` x ``grid`` search is followed by
    ``zooms`` searches on boxes of +-2 cells around the incumbent.
    Returns ``(objective, P)``.
    """
    lam = np.real(np.diag(np.atleast_2d(spec.Lambda)))
    if lam.size != 2:
        raise ValueError("kernel_grid_oracle handles K = 2 only")
    floor = np.asarray(spec.sinr_threshold) * np.asarray(spec.noise, dtype=float)
    spare = spec.power_budget - float(lam @ floor)

    def to_P(s, t):
        s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
        return floor + np.stack([s * t * spare / lam[0], s * (1 - t) * spare / lam[1]], axis=-1)

    best_v, s_best, t_best = -np.inf, 0.0, 0.0
    s_lo, s_hi, t_lo, t_hi = 0.0, 1.0, 0.0, 1.0
    for _ in range(zooms + 1):
        S, T = np.meshgrid(np.linspace(s_lo, s_hi, grid), np.linspace(t_lo, t_hi, grid), indexing="ij")
        vals = tight_objective(spec, to_P(S, T))
        i = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[i] > best_v:
            best_v, s_best, t_best = float(vals[i]), float(S[i]), float(T[i])
        ds, dt = 2 * (s_hi - s_lo) / (grid - 1), 2 * (t_hi - t_lo) / (grid - 1)
        s_lo, s_hi = max(0.0, s_best - ds), min(1.0, s_best + ds)
        t_lo, t_hi = max(0.0, t_best - dt), min(1.0, t_best + dt)
    return best_v, to_P(s_best, t_best)
