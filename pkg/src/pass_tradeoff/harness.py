"""Batch runs: Monte Carlo drops, beta sweeps and oracle verification.

Output files of :func:`run_scenario` (all CSV with a header row):

``pareto.csv``
    one :class:`SweepRow` per (drop, beta), sorted by (drop, beta).
``pareto_baseline.csv``
    same columns for the uniform-placement baseline (only with ``baseline``).
``convergence.csv``
    drop, beta, outer_iter, objective, trace_power, SE, EE, sca_iterations,
    pso_sweeps; row 0 is the start point, then one row per BCD cycle and a
    final row for the closing power step.
``layout.csv``
    drop, beta, waveguide, pa, x; final PA coordinates.
``manifest.json``
    configuration, seeds, tolerances, library versions and failed drops.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numba
import numpy as np
import scipy

from . import __version__
from .config import ScenarioConfig
from .convex import SubproblemSpec, hessian_delta, solve_subproblem
from .model import (PinchLayout, SystemParams, UserSet, build_channels, effective_gain,
                    se_ee_multi, se_ee_single, uniform_layout, weighted_objective)
from .multi_user import (aggregate_rows, bcd_solve, lambda_matrix, sca_power, sca_start,
                         solve_fixed_layout, trace_objective_sm, zf_build, zf_lambda)
from .oracle import (OracleReport, alignment_residual, direct_trace_oracle, grid_power_oracle,
                     kernel_grid_oracle, phase_scan_oracle, sinr_simulation_oracle)
from .single_user import (BUDGET_LIMITED, INTERIOR, g2_eval, ee_peak_power, optimal_power,
                          place_all, received_phases)

log = logging.getLogger(__name__)

BUDGET_RTOL = 1e-6
MIMO_NOTE = ("conventional-MIMO baseline curves are not produced: no MIMO channel or array model "
             "is available for them")


@dataclass
class SweepRow:
    seed: int
    drop: int
    beta: float
    SE: float
    EE: float
    power: float          # P_opt (single user) or tr(Lambda P) (multi-user)
    regime: str
    outer_iters: int
    wall_time: float


COLUMNS = [f.name for f in fields(SweepRow)]
CONVERGENCE_COLUMNS = ["drop", "beta", "outer_iter", "objective", "trace_power", "SE", "EE",
                       "sca_iterations", "pso_sweeps"]
LAYOUT_COLUMNS = ["drop", "beta", "waveguide", "pa", "x"]


@dataclass
class DropResult:
    drop: int
    rows: List[SweepRow] = field(default_factory=list)
    baseline: List[SweepRow] = field(default_factory=list)
    convergence: list = field(default_factory=list)
    layouts: list = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class ScenarioResult:
    rows: List[SweepRow]
    baseline: List[SweepRow]
    failures: dict
    out_dir: Optional[Path]
    drops: List[DropResult] = field(default_factory=list)


def drop_users(cfg: ScenarioConfig, drop: int) -> UserSet:
    """Explicit positions, or K uniform users from the (seed, drop) stream."""
    if cfg.positions is not None:
        return UserSet(np.asarray(cfg.positions, dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, drop]))
    return UserSet.uniform(rng, cfg.K, cfg.params)


def _drop_seed(cfg: ScenarioConfig, drop: int) -> int:
    return int(np.random.SeedSequence([cfg.seed, drop, 1]).generate_state(1)[0])


def _regime(total: float, budget: float) -> str:
    return BUDGET_LIMITED if total >= budget * (1 - BUDGET_RTOL) else INTERIOR


def _layout_rows(drop, beta, layout: PinchLayout):
    N, M = layout.x.shape
    return [(drop, beta, m, n, float(layout.x[n, m])) for m in range(M) for n in range(N)]


def _solve_single_drop(cfg: ScenarioConfig, drop: int) -> DropResult:
    out = DropResult(drop)
    user = drop_users(cfg, drop).xy[0]
    t0 = time.perf_counter()
    layout = place_all(cfg.params, user)
    zeta = effective_gain(cfg.params, layout, user)
    t_place = time.perf_counter() - t0
    zeta_u = effective_gain(cfg.params, uniform_layout(cfg.params), user) if cfg.baseline else None
    for b in cfg.betas:
        p = cfg.params.with_(beta=b)
        t1 = time.perf_counter()
        P, regime = optimal_power(zeta, p)
        se, ee = se_ee_single(p, zeta, P)
        out.rows.append(SweepRow(cfg.seed, drop, b, float(se), float(ee), float(P), regime, 1,
                                 t_place + time.perf_counter() - t1))
        out.layouts += _layout_rows(drop, b, layout)
        if zeta_u is not None:
            t1 = time.perf_counter()
            Pu, ru = optimal_power(zeta_u, p)
            seu, eeu = se_ee_single(p, zeta_u, Pu)
            out.baseline.append(SweepRow(cfg.seed, drop, b, float(seu), float(eeu), float(Pu), ru, 1,
                                         time.perf_counter() - t1))
    return out


def consolidate(params: SystemParams, users: UserSet, betas, results, order: int = 1,
                sca_tol: float = 1e-6):
    """Re-optimise power for every beta on every distinct layout found by the sweep.

    Each BCD run ends in its own local optimum; letting every beta pick the
    best of all layouts (with power re-optimised) yields one Pareto set per
    drop.  ``results`` is a list of (layout, P, objective, SE, EE, trace) per
    beta and is returned updated.
    """
    layouts: List[PinchLayout] = []
    for r in results:
        if not any(np.array_equal(r[0].x, L.x) for L in layouts):
            layouts.append(r[0])
    if len(layouts) < 2:
        return results
    lams = [zf_lambda(params, L, users) for L in layouts]
    out = list(results)
    for i, b in enumerate(betas):
        p = params.with_(beta=b)
        for L, Lam in zip(layouts, lams):
            if np.array_equal(L.x, out[i][0].x):
                continue
            pw = sca_power(p, Lam, out[i][1], order=order, tol=sca_tol)
            if pw.objective > out[i][2]:
                lam = np.real(np.diag(Lam))
                out[i] = (L, pw.P, pw.objective, pw.SE, pw.EE, float(lam @ pw.P))
    return out


def _solve_multi_drop(cfg: ScenarioConfig, drop: int) -> DropResult:
    out = DropResult(drop)
    users = drop_users(cfg, drop)
    seed = _drop_seed(cfg, drop)
    results, times, iters = [], [], []
    for b in cfg.betas:
        p = cfg.params.with_(beta=b)
        res = bcd_solve(p, users, order=cfg.order, pso=cfg.pso, seed=seed, max_outer=cfg.max_outer,
                        tol=cfg.bcd_tol, sca_tol=cfg.sca_tol)
        results.append((res.layout, res.P, res.objective, res.SE, res.EE, res.total_power))
        times.append(res.wall_time)
        iters.append(res.outer_iterations)
        for row in res.trace.rows():
            out.convergence.append((drop, b, *row))
        if cfg.baseline:
            base = solve_fixed_layout(p, users, uniform_layout(p), order=cfg.order, sca_tol=cfg.sca_tol)
            out.baseline.append(SweepRow(cfg.seed, drop, b, float(base.SE), float(base.EE),
                                         float(base.total_power), _regime(base.total_power, p.power_budget),
                                         1, base.wall_time))
    if cfg.consolidate:
        t0 = time.perf_counter()
        results = consolidate(cfg.params, users, cfg.betas, results, cfg.order, cfg.sca_tol)
        share = (time.perf_counter() - t0) / len(cfg.betas)
        times = [t + share for t in times]
    for b, r, t, q in zip(cfg.betas, results, times, iters):
        out.rows.append(SweepRow(cfg.seed, drop, b, float(r[3]), float(r[4]), float(r[5]),
                                 _regime(r[5], cfg.params.power_budget), q, t))
        out.layouts += _layout_rows(drop, b, r[0])
    return out


def solve_drop(cfg: ScenarioConfig, drop: int) -> DropResult:
    """All beta points of one drop; errors are captured, not raised."""
    try:
        if cfg.mode == "single":
            return _solve_single_drop(cfg, drop)
        return _solve_multi_drop(cfg, drop)
    except Exception as exc:  # one bad drop must not abort the batch
        log.error("drop %d failed: %s: %s", drop, type(exc).__name__, exc)
        return DropResult(drop, error=f"{type(exc).__name__}: {exc}")


def _solve_drop_star(args):
    return solve_drop(*args)


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def versions() -> dict:
    return {"pass_tradeoff": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> ScenarioResult:
    """Solve every (drop, beta) point and write the output files.

    Drops run in a process pool when ``cfg.workers > 1``; files are written
    afterwards by this process in (drop, beta) order.
    """
    drops = range(cfg.drops)
    if cfg.workers > 1 and cfg.drops > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_solve_drop_star, [(cfg, d) for d in drops]))
    else:
        results = [solve_drop(cfg, d) for d in drops]
    results.sort(key=lambda r: r.drop)
    rows = [r for d in results for r in sorted(d.rows, key=lambda s: s.beta)]
    base = [r for d in results for r in sorted(d.baseline, key=lambda s: s.beta)]
    failures = {d.drop: d.error for d in results if d.error}
    path = None
    if out_dir is not None or cfg.output_dir:
        path = Path(out_dir if out_dir is not None else cfg.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        _write_csv(path / "pareto.csv", COLUMNS, [astuple(r) for r in rows])
        if cfg.baseline:
            _write_csv(path / "pareto_baseline.csv", COLUMNS, [astuple(r) for r in base])
        _write_csv(path / "convergence.csv", CONVERGENCE_COLUMNS, [c for d in results for c in d.convergence])
        _write_csv(path / "layout.csv", LAYOUT_COLUMNS, [c for d in results for c in d.layouts])
        manifest = {
            "config": cfg.as_dict(),
            "seeds": {"base": cfg.seed, "drops": list(drops),
                      "pso_seeds": [_drop_seed(cfg, d) for d in drops] if cfg.mode == "multi" else []},
            "tolerances": {"sca": cfg.sca_tol, "bcd": cfg.bcd_tol, "pso_sweep": cfg.pso.tol,
                           "budget_rtol": BUDGET_RTOL},
            "versions": versions(),
            "columns": {"pareto": COLUMNS, "convergence": CONVERGENCE_COLUMNS, "layout": LAYOUT_COLUMNS},
            "failures": {str(k): v for k, v in failures.items()},
            "notes": [MIMO_NOTE],
        }
        (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ScenarioResult(rows, base, failures, path, results)


# ---------------------------------------------------------------------------
# verification

def random_power_case(rng: np.random.Generator, base: SystemParams = SystemParams()):
    """(zeta, params) with log-uniform zeta and P_T and uniform beta."""
    zeta = float(10 ** rng.uniform(3, 9))
    PT = float(10 ** rng.uniform(-3, 1))
    return zeta, base.with_(power_budget=PT, beta=float(rng.uniform(0, 1)))


def icr_drop_check(params: SystemParams, user, scan: bool = True):
    """Place PAs for one user; return (max phase spread, max |icr - scan|, max k)."""
    records: list = []
    layout = place_all(params, user, records)
    phi = received_phases(params, layout, user).ravel()
    spread = float(np.max(np.abs(np.angle(np.exp(1j * (phi - phi[0]))))))
    worst = 0.0
    for ctx, sol in records if scan else ():
        worst = max(worst, abs(phase_scan_oracle(ctx, params) - sol.offset))
    kmax = max((sol.k for _, sol in records), default=0)
    return spread, worst, kmax


def kernel_case(rng: np.random.Generator, beta: float, order: int, params: SystemParams = SystemParams()):
    """A K = 2 subproblem at a random local point on a random uniform-layout drop."""
    users = UserSet.uniform(rng, 2, params)
    Lam = zf_lambda(params, uniform_layout(params), users)
    lam = np.real(np.diag(Lam))
    noise, gamma = params.noise_vector(2), params.sinr_vector(2)
    P = sca_start(params, lam, noise, gamma)
    floor = gamma * noise
    P = floor + (P - floor) * rng.uniform(0.2, 1.0, 2)
    se, ee = se_ee_multi(params, P, float(lam @ P), noise)
    kappa = float(lam @ P) + params.fixed_circuit_power + params.rate_power_coeff * se
    mu2 = (1 - beta) * math.log(ee) if beta < 1 else 0.0
    delta = hessian_delta(mu2, kappa, beta) if order == 2 and beta < 1 else 0.0
    return SubproblemSpec(Lam, noise, gamma, params.power_budget, beta, mu2, kappa, P, delta,
                          params.fixed_circuit_power, params.rate_power_coeff)


def run_verify(level: str = "quick", seed: int = 0) -> List[OracleReport]:
    """Cross-check fast paths against the oracles; returns one report per check."""
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    full = level == "full"
    params = SystemParams()
    rng = np.random.default_rng(seed)
    reports: List[OracleReport] = []

    # phase alignment
    n_drops = 200 if full else 10
    spread = worst = 0.0
    for _ in range(n_drops):
        user = rng.uniform([0, 0], [params.region_x, params.region_y])
        s, w, _ = icr_drop_check(params, user)
        spread, worst = max(spread, s), max(worst, w)
    reports.append(OracleReport("icr_vs_phase_scan_max_offset_gap", 0.0, worst, params.wavelength / 100,
                                seed=seed, details={"drops": n_drops}))
    reports.append(OracleReport("placement_phase_spread_rad", 0.0, spread, 1e-4, seed=seed,
                                details={"drops": n_drops}))
    n_thm = 10_000 if full else 200
    kmax = 0
    for _ in range(n_thm):
        user = rng.uniform([0, 0], [params.region_x, params.region_y])
        kmax = max(kmax, icr_drop_check(params, user, scan=False)[2])
    reports.append(OracleReport("termination_sweep_max_k", 0.0, float(kmax), float(10_000), seed=seed,
                                details={"drops": n_thm, "empirical_max_k": kmax}))

    # closed-form power
    for i in range(20 if full else 3):
        zeta, p = random_power_case(rng)
        P, _ = optimal_power(zeta, p)
        reports.append(OracleReport(f"optimal_power_vs_grid[{i}]", grid_power_oracle(zeta, p), P,
                                    p.power_budget / 10**6, seed=seed,
                                    details={"zeta": zeta, "P_T": p.power_budget, "beta": p.beta}))
        reports.append(OracleReport(f"g2_at_ee_peak[{i}]", 1.0, g2_eval(zeta, p, ee_peak_power(zeta, p)), 1e-8))

    # ZF algebra
    for i in range(20 if full else 5):
        K = 2 + i % 2
        users = UserSet.uniform(rng, K, params)
        layout = PinchLayout.from_columns(np.sort(rng.uniform(0, params.region_x, (params.n_pas, params.n_waveguides)), axis=0),
                                          params, validate=False)
        if layout.violations(params.min_spacing):
            layout = uniform_layout(params)
        ch = build_channels(layout, params, users)
        P = rng.uniform(0.1, 1.0, K) * 1e-9
        rows = aggregate_rows(params, layout, users)
        m = int(rng.integers(params.n_waveguides))
        reports.append(OracleReport(f"sherman_morrison_trace[{i}]", direct_trace_oracle(ch, P),
                                    trace_objective_sm(rows, m, rows[m], P), 1e-9, relative=True))
    users = UserSet.uniform(rng, 2, params)
    layout = uniform_layout(params)
    ch = build_channels(layout, params, users)
    P = np.array([2e-12, 5e-12])
    zf = zf_build(ch, P)
    sinr = sinr_simulation_oracle(ch, zf.W, params.noise_vector(2), 10**5, seed=seed)
    for k in range(2):
        reports.append(OracleReport(f"zf_sinr_simulation[{k}]", float(sinr[k]), float(P[k] / params.noise_vector(2)[k]),
                                    0.02, relative=True, seed=seed, details={"trials": 10**5}))

    # convex kernel
    for i, (beta, order) in enumerate([(0.0, 1), (0.5, 1), (0.5, 2), (1.0, 1)] * (3 if full else 1)):
        spec = kernel_case(rng, beta, order)
        sol = solve_subproblem(spec)
        val, _ = kernel_grid_oracle(spec)
        reports.append(OracleReport(f"kernel_vs_grid[{i}](beta={beta},order={order})", val, sol.objective, 1e-6))
        reports.append(OracleReport(f"kernel_kkt[{i}]", 0.0, sol.kkt_residual, 1e-7))
    return reports
