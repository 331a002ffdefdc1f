"""Two-stage single-user design: PA placement by phase alignment, then power.

Stage one places the PAs near the user (a Delta_min comb centred on x_u)
and nudges every PA forward by the smallest offset that makes its received
phase congruent with an already-placed neighbour (iterative closed-form
refinement, ICR).  Stage two picks the transmit power in closed form from the
EE-peak power P* and the root of g2(P) = 1 - beta.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import BracketFailure, KCapExceeded, LayoutInvalid, RegionTooSmall
from .model import (PinchLayout, SystemParams, effective_gain, pa_user_distance,
                    se_ee_single, weighted_objective)

log = logging.getLogger(__name__)

K_CAP = 10_000
BISECT_RTOL = 1e-10
BISECT_MAXITER = 200
EPS_POWER = 1e-12

POSITIVE, NEGATIVE, CROSS = "positive-x", "negative-x", "cross-waveguide"
BUDGET_LIMITED, INTERIOR = "budget-limited", "interior-P**"


def reference_index(N: int) -> int:
    """0-based index of the ((N+1)/2)-th (odd N) or (N/2)-th (even N) PA."""
    return (N + 1) // 2 - 1


def coarse_placement(params: SystemParams, user, shift: float = 0.0) -> PinchLayout:
    """Delta_min comb centred on the user's x, identical on every waveguide.

    The comb is translated by ``shift`` and then moved the minimum distance
    needed to fit in [0, D_x].
    """
    N, M, dmin = params.n_pas, params.n_waveguides, params.min_spacing
    if N * dmin > params.region_x:
        raise RegionTooSmall(f"{N} PAs at spacing {dmin:g} m do not fit in D_x = {params.region_x:g} m")
    xu = float(np.asarray(user)[0])
    n = np.arange(N)
    col = xu - ((N - 1) / 2.0 - n) * dmin + shift
    lo_over = -col[0]
    hi_over = col[-1] - params.region_x
    if lo_over > 0:
        col = col + lo_over
        log.debug("coarse comb shifted right by %.3g m", lo_over)
    elif hi_over > 0:
        col = col - hi_over
        log.debug("coarse comb shifted left by %.3g m", hi_over)
    return PinchLayout.from_columns(np.tile(col[:, None], (1, M)), params)


# ---------------------------------------------------------------------------
# ICR

@dataclass(frozen=True)
class IcrContext:
    """One refinement: move the PA that starts at ``base_x`` until its phase
    matches the already-refined anchor PA at (``anchor_x``, ``anchor_y``).

    ``direction`` is POSITIVE / CROSS (PA moves towards +x) or NEGATIVE.
    ``min_offset`` keeps the refined PA at least Delta_min away from a
    neighbour that has itself been refined away from its coarse slot.
    """

    anchor_x: float
    anchor_y: float
    base_x: float
    waveguide_y: float
    user: tuple
    direction: str
    min_offset: float = 0.0
    k_cap: int = K_CAP

    @property
    def anchor_position(self) -> np.ndarray:
        return np.array([self.anchor_x, self.anchor_y, np.nan])

    def anchor_distance(self, params: SystemParams) -> float:
        return float(pa_user_distance(self.anchor_x, self.anchor_y, np.asarray(self.user), params.height))

    def a1(self, params: SystemParams) -> float:
        return (self.waveguide_y - self.user[1]) ** 2 + params.height ** 2

    def position(self, offset: float) -> float:
        return self.base_x - offset if self.direction == NEGATIVE else self.base_x + offset


@dataclass(frozen=True)
class QuadraticCoeffs:
    a: float
    b: float
    c: float

    @property
    def discriminant(self) -> float:
        return self.b * self.b - 4 * self.a * self.c

    def roots(self):
        disc = self.discriminant
        if disc < 0:
            return ()
        sq = math.sqrt(disc)
        q = -0.5 * (self.b + math.copysign(sq, self.b))
        if q == 0.0:
            return (0.0,) if self.a != 0 else ()
        return tuple(sorted({q / self.a, self.c / q}))


@dataclass(frozen=True)
class IcrSolution:
    offset: float
    k: int
    iterations: int
    residual: float


def icr_coefficients(ctx: IcrContext, params: SystemParams, k: int) -> QuadraticCoeffs:
    """Quadratic a (Delta')^2 + b Delta' + c = 0 obtained by squaring the phase condition."""
    lam, r = params.wavelength, params.wavelength / params.guided_wavelength
    D = ctx.anchor_distance(params)
    E = ctx.base_x - ctx.user[0]
    a = 1.0 - r * r
    if ctx.direction == NEGATIVE:
        F = D - k * lam + r * (ctx.anchor_x - ctx.base_x)
        return QuadraticCoeffs(a, -2.0 * E - 2.0 * r * F, E * E + ctx.a1(params) - F * F)
    F = k * lam + D - r * (ctx.base_x - ctx.anchor_x)
    return QuadraticCoeffs(a, 2.0 * E + 2.0 * r * F, E * E + ctx.a1(params) - F * F)


def _range_term(ctx: IcrContext, params: SystemParams, k: int, offset: float) -> float:
    """Right-hand side of the un-squared equation; a root is genuine iff it is >= 0."""
    lam, r = params.wavelength, params.wavelength / params.guided_wavelength
    D = ctx.anchor_distance(params)
    if ctx.direction == NEGATIVE:
        return D - k * lam + r * (ctx.anchor_x - ctx.base_x) + r * offset
    return k * lam + D - r * (ctx.base_x - ctx.anchor_x) - r * offset


def icr_phase(ctx: IcrContext, params: SystemParams, offset):
    """Phase difference (rad) between the moved PA and the anchor, signed so that
    it increases with ``offset``; alignment means it equals 2 k pi."""
    offset = np.asarray(offset, dtype=float)
    x = ctx.position(offset)
    d = pa_user_distance(x, ctx.waveguide_y, np.asarray(ctx.user), params.height)
    D = ctx.anchor_distance(params)
    diff = 2 * np.pi / params.wavelength * (d - D) + 2 * np.pi / params.guided_wavelength * (x - ctx.anchor_x)
    return -diff if ctx.direction == NEGATIVE else diff


def icr_refine(ctx: IcrContext, params: SystemParams) -> IcrSolution:
    """Smallest valid offset >= ``ctx.min_offset`` that aligns the PA with its anchor.

    k starts at the first integer whose 2 k pi the phase can still reach at the
    minimum offset (never below 1 on a single waveguide) and is incremented until
    one root of the quadratic is non-negative and genuine.
    """
    start = float(icr_phase(ctx, params, ctx.min_offset))
    k0 = math.ceil(start / (2 * np.pi) - 1e-12)
    if ctx.direction != CROSS:
        k0 = max(k0, 1)
    scale = max(params.wavelength, abs(ctx.base_x) + 1.0)
    tol = 1e-12 * scale
    for it in range(ctx.k_cap):
        k = k0 + it
        valid = [r for r in icr_coefficients(ctx, params, k).roots()
                 if r >= ctx.min_offset - tol and _range_term(ctx, params, k, r) >= -tol]
        if valid:
            off = max(min(valid), ctx.min_offset)
            res = float(icr_phase(ctx, params, off)) - 2 * np.pi * k
            return IcrSolution(off, k, it + 1, res)
    raise KCapExceeded(f"no valid ICR root for k in [{k0}, {k0 + ctx.k_cap})")


def _refine_layout(params: SystemParams, user, coarse: np.ndarray, records: Optional[list]):
    N, M = coarse.shape
    y = params.waveguide_y
    dmin = params.min_spacing
    c = reference_index(N)
    ux = (float(user[0]), float(user[1]))
    x = coarse.copy()

    def run(ctx, m, n):
        sol = icr_refine(ctx, params)
        if records is not None:
            records.append((ctx, sol))
        x[n, m] = ctx.position(sol.offset)

    for m in range(M):
        if m > 0:
            run(IcrContext(x[c, 0], y[0], coarse[c, m], y[m], ux, CROSS), m, c)
        for n in range(c + 1, N):
            base = coarse[n - 1, m] + dmin
            floor = max(0.0, x[n - 1, m] + dmin - base)
            run(IcrContext(x[n - 1, m], y[m], base, y[m], ux, POSITIVE, floor), m, n)
        for n in range(c - 1, -1, -1):
            base = coarse[n + 1, m] - dmin
            floor = max(0.0, base - (x[n + 1, m] - dmin))
            run(IcrContext(x[n + 1, m], y[m], base, y[m], ux, NEGATIVE, floor), m, n)
    return x


def place_all(params: SystemParams, user, records: Optional[list] = None,
              max_attempts: int = 8) -> PinchLayout:
    """Coarse comb followed by ICR refinement of every PA.

    If refinement pushes a PA out of [0, D_x] the coarse comb is translated
    inwards by the overflow and placement is redone.  When that keeps failing,
    offending PAs fall back to their coarse positions (logged).
    ``records``, if given, receives ``(IcrContext, IcrSolution)`` pairs from the
    accepted attempt.
    """
    user = np.asarray(user, dtype=float)
    shift = 0.0
    margin = params.wavelength / 4
    for _ in range(max_attempts):
        coarse = coarse_placement(params, user, shift).x
        recs = [] if records is not None else None
        x = _refine_layout(params, user, np.array(coarse), recs)
        lo, hi = -x.min(), x.max() - params.region_x
        if lo <= 0 and hi <= 0:
            if records is not None:
                records.extend(recs)
            return PinchLayout.from_columns(x, params)
        if lo > 0 and hi > 0:
            break
        # shift relative to the comb actually used
        current = coarse[0, 0] - (float(user[0]) - (params.n_pas - 1) / 2.0 * params.min_spacing)
        shift = current + (lo + margin if lo > 0 else -(hi + margin))
    log.warning("ICR placement left the region for user at %s; keeping coarse positions", user)
    coarse = coarse_placement(params, user).x
    recs = [] if records is not None else None
    x = _refine_layout(params, user, np.array(coarse), recs)
    out = (x < 0) | (x > params.region_x)
    x[out] = coarse[out]
    if records is not None:
        records.extend(recs)
    layout = PinchLayout.from_columns(x, params, validate=False)
    bad = layout.violations(params.min_spacing)
    if bad:
        raise LayoutInvalid("; ".join(bad))
    return layout


def received_phases(params: SystemParams, layout: PinchLayout, user) -> np.ndarray:
    """phi_{m,n} = 2 pi d / lambda + 2 pi |feed - PA| / lambda_g, shape (N, M)."""
    d = pa_user_distance(layout.x, layout.waveguide_y[None, :], np.asarray(user), params.height)
    return 2 * np.pi * d / params.wavelength + 2 * np.pi * (layout.x + params.region_x / 2) / params.guided_wavelength


def coherent_sum(params: SystemParams, layout: PinchLayout, user) -> float:
    """|sum_{m,n} exp(-j phi_{m,n}) / d_{m,n}| over all PAs."""
    d = pa_user_distance(layout.x, layout.waveguide_y[None, :], np.asarray(user), params.height)
    return float(abs(np.sum(np.exp(-1j * received_phases(params, layout, user)) / d)))


# ---------------------------------------------------------------------------
# power

def _bisect(f, lo, hi, rtol=BISECT_RTOL, maxiter=BISECT_MAXITER):
    """Root of a decreasing ``f`` with f(lo) >= 0 >= f(hi)."""
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


def ee_numerator(zeta: float, params: SystemParams, P):
    """g(P) = zeta (P + P_f) - (1 + zeta P) ln(1 + zeta P); same sign as dEE/dP."""
    P = np.asarray(P, dtype=float)
    return zeta * (P + params.fixed_circuit_power) - (1 + zeta * P) * np.log1p(zeta * P)


def ee_peak_power(zeta: float, params: SystemParams) -> float:
    """Unique maximiser P* of EE(P) (root of ``ee_numerator``), by bisection."""
    if not zeta > 0:
        raise ValueError("zeta must be > 0")
    Pf = params.fixed_circuit_power

    def g(rho):  # ee_numerator in terms of rho = zeta P
        return rho + zeta * Pf - (1 + rho) * math.log1p(rho)

    hi = max(1.0, zeta * Pf)
    for _ in range(2000):
        if g(hi) < 0:
            break
        hi *= 2.0
    else:
        raise BracketFailure("could not bracket the EE peak")
    return _bisect(g, 0.0, hi) / zeta


def g2_eval(zeta: float, params: SystemParams, P):
    """g2(P); the derivative of the log-objective has the sign of g2(P) - (1 - beta)."""
    P = np.asarray(P, dtype=float)
    c = params.rate_power_coeff / math.log(2.0)
    L = np.log1p(zeta * P)
    val = zeta * (P + params.fixed_circuit_power + c * L) / ((1 + zeta * P + c * zeta) * L)
    return float(val) if val.ndim == 0 else val


def g2_terms(zeta: float, params: SystemParams, P):
    """The three summands of g2 (power, circuit and rate-dependent parts)."""
    P = np.asarray(P, dtype=float)
    A = params.rate_power_coeff * zeta / math.log(2.0)
    L = np.log1p(zeta * P)
    den = 1 + zeta * P + A
    return zeta * P / (den * L), zeta * params.fixed_circuit_power / (den * L), A / den


def power_objective(zeta: float, params: SystemParams, P):
    """beta ln SE(P) + (1 - beta) ln EE(P); vectorised."""
    se, ee = se_ee_single(params, zeta, np.asarray(P, dtype=float))
    b = params.beta
    with np.errstate(divide="ignore"):
        val = np.zeros_like(np.asarray(se, dtype=float))
        if b > 0:
            val = val + b * np.log(se)
        if b < 1:
            val = val + (1 - b) * np.log(ee)
    return val


def optimal_power(zeta: float, params: SystemParams):
    """Closed-form maximiser of the weighted objective on (0, P_T].

    Returns ``(P_opt, regime)``.
    """
    PT, beta = params.power_budget, params.beta
    p_star = ee_peak_power(zeta, params)
    if PT <= p_star or g2_eval(zeta, params, PT) > 1 - beta:
        return PT, BUDGET_LIMITED
    p = _bisect(lambda P: g2_eval(zeta, params, P) - (1 - beta), p_star, PT)
    return max(p, EPS_POWER), INTERIOR


@dataclass(frozen=True)
class SingleUserSolution:
    layout: PinchLayout
    P_opt: float
    SE: float
    EE: float
    regime: str
    zeta: float
    objective: float


def solve_single_user(params: SystemParams, user, layout: Optional[PinchLayout] = None) -> SingleUserSolution:
    """Place PAs (or use ``layout`` if given, e.g. a baseline), then choose power."""
    if layout is None:
        layout = place_all(params, user)
    zeta = effective_gain(params, layout, user)
    P, regime = optimal_power(zeta, params)
    se, ee = se_ee_single(params, zeta, P)
    return SingleUserSolution(layout, P, se, ee, regime, zeta, weighted_objective(params.beta, se, ee))
