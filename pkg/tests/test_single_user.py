import math

import numpy as np
import pytest

from pass_tradeoff.errors import KCapExceeded, RegionTooSmall
from pass_tradeoff.model import (PinchLayout, UserSet, effective_gain, pa_user_distance, se_ee_single,
                                 uniform_layout, weighted_objective)
from pass_tradeoff.oracle import alignment_residual, grid_power_oracle, phase_scan_oracle
from pass_tradeoff.single_user import (BUDGET_LIMITED, CROSS, INTERIOR, NEGATIVE, POSITIVE, IcrContext,
                                       coarse_placement, coherent_sum, ee_numerator, ee_peak_power,
                                       g2_eval, g2_terms, icr_coefficients, icr_phase, icr_refine,
                                       optimal_power, place_all, power_objective, received_phases,
                                       reference_index, solve_single_user)

USER = np.array([3.7, 6.2])


def wrapped(x):
    return np.angle(np.exp(1j * np.asarray(x)))


# --- coarse placement ----------------------------------------------------------

def test_reference_index():
    assert [reference_index(n) for n in (1, 2, 3, 4, 5)] == [0, 0, 1, 1, 2]


def test_coarse_comb_centred_on_user(params):
    lay = coarse_placement(params, USER)
    dmin = params.min_spacing
    assert np.allclose(lay.x[:, 0], USER[0] + np.array([-dmin, 0.0, dmin]), atol=1e-15)
    assert np.allclose(np.diff(lay.x, axis=0), dmin)
    assert np.all(lay.x == lay.x[:, :1])


def test_coarse_single_pa_at_user(params):
    p = params.with_(n_pas=1)
    assert np.all(coarse_placement(p, USER).x == USER[0])


def test_coarse_edge_user_shifted_inside(params):
    lay = coarse_placement(params, np.array([0.0, 5.0]))
    assert lay.x.min() == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(np.diff(lay.x, axis=0), params.min_spacing)
    lay = coarse_placement(params, np.array([params.region_x, 5.0]))
    assert lay.x.max() == pytest.approx(params.region_x, abs=1e-12)


def test_coarse_region_too_small(params):
    with pytest.raises(RegionTooSmall):
        coarse_placement(params.with_(region_x=params.min_spacing), USER)


# --- ICR ------------------------------------------------------------------------

def test_quadratic_leading_coefficient(params):
    recs = []
    place_all(params, USER, records=recs)
    seen = set()
    for ctx, sol in recs:
        seen.add(ctx.direction)
        assert icr_coefficients(ctx, params, sol.k).a == pytest.approx(1 - params.n_eff ** 2, abs=1e-15)
    assert icr_coefficients(recs[0][0], params, 1).a == pytest.approx(-0.96)
    assert seen == {POSITIVE, NEGATIVE, CROSS}


def test_refined_offsets_match_frozen_scan(params):
    # frozen from phase_scan_oracle (lambda/200 scan + Brent polish)
    expected = [(POSITIVE, 0.002291299673601142, 1), (NEGATIVE, 0.002297365208471568, 1),
                (CROSS, 0.005701760442026866, -255)]
    recs = []
    place_all(params, USER, records=recs)
    for (ctx, sol), (direction, off, k) in zip(recs[:3], expected):
        assert ctx.direction == direction
        assert sol.k == k
        assert sol.offset == pytest.approx(off, abs=params.wavelength / 100)
        assert sol.offset == pytest.approx(off, abs=1e-9)


def test_refine_matches_scan_oracle(params, rng):
    for _ in range(10):
        recs = []
        place_all(params, UserSet.uniform(rng, 1, params).xy[0], records=recs)
        for ctx, sol in recs:
            assert abs(sol.offset - phase_scan_oracle(ctx, params)) <= params.wavelength / 100
            assert abs(alignment_residual(ctx, params, sol.offset)) < 1e-6
            assert abs(sol.residual) < 1e-6


def test_positive_case_residual_multiple_of_2pi(params):
    recs = []
    place_all(params, USER, records=recs)
    ctx, sol = next(r for r in recs if r[0].direction == POSITIVE)
    x_new = ctx.anchor_x + params.min_spacing + sol.offset
    assert x_new == pytest.approx(ctx.position(sol.offset), abs=1e-15)
    phase = float(icr_phase(ctx, params, sol.offset))
    assert abs(phase - 2 * np.pi * round(phase / (2 * np.pi))) < 1e-6


def test_smallest_root_kept(params):
    # when two roots of one k are admissible the smaller must be returned
    recs = []
    place_all(params, USER, records=recs)
    for ctx, sol in recs:
        roots = icr_coefficients(ctx, params, sol.k).roots()
        admissible = [r for r in roots if r >= ctx.min_offset - 1e-12
                      and abs(float(icr_phase(ctx, params, r)) - 2 * np.pi * sol.k) < 1e-6]
        assert sol.offset == pytest.approx(min(admissible), abs=1e-12)


def test_k_cap_raises(params, monkeypatch):
    # a quadratic without real roots for every k must end in KCapExceeded
    import pass_tradeoff.single_user as su
    monkeypatch.setattr(su, "icr_coefficients", lambda ctx, p, k: su.QuadraticCoeffs(1.0, 0.0, 1.0))
    ctx = IcrContext(USER[0], params.waveguide_y[0], USER[0] + params.min_spacing, params.waveguide_y[0],
                     tuple(USER), POSITIVE, k_cap=25)
    with pytest.raises(KCapExceeded):
        icr_refine(ctx, params)


def test_pure_waveguide_period_limit(params):
    # user very far away along y: the free-space term barely changes, so the
    # next alignment is one guided wavelength further on
    far = (USER[0], 1e7)
    y = params.waveguide_y[0]
    ctx = IcrContext(USER[0], y, USER[0], y, far, POSITIVE, min_offset=params.guided_wavelength / 2)
    assert phase_scan_oracle(ctx, params) == pytest.approx(params.guided_wavelength, rel=1e-6)
    sol = icr_refine(ctx, params)
    assert sol.k == 1 and sol.offset == pytest.approx(params.guided_wavelength, rel=1e-6)


def test_phases_congruent_after_placement(params, rng):
    for _ in range(20):
        user = UserSet.uniform(rng, 1, params).xy[0]
        phi = received_phases(params, place_all(params, user), user)
        assert np.max(np.abs(wrapped(phi - phi.flat[0]))) < 1e-4


def test_refinement_improves_coherent_sum(params, rng):
    for _ in range(20):
        user = UserSet.uniform(rng, 1, params).xy[0]
        coarse = coarse_placement(params, user)
        fine = place_all(params, user)
        inv = lambda lay: np.sum(1 / pa_user_distance(lay.x, lay.waveguide_y[None, :], user, params.height))
        assert inv(fine) >= 0.999 * inv(coarse)
        assert coherent_sum(params, fine, user) > coherent_sum(params, coarse, user)


def test_single_pa_single_waveguide_untouched(params):
    p = params.with_(n_pas=1, n_waveguides=1)
    assert np.array_equal(place_all(p, USER).x, coarse_placement(p, USER).x)


def test_layout_valid_and_even_n(params, rng):
    for N in (2, 4, 5):
        p = params.with_(n_pas=N)
        for _ in range(5):
            user = UserSet.uniform(rng, 1, p).xy[0]
            lay = place_all(p, user)
            assert not lay.violations(p.min_spacing)
            phi = received_phases(p, lay, user)
            assert np.max(np.abs(wrapped(phi - phi.flat[0]))) < 1e-4


def test_edge_users_stay_inside(params):
    for ux in (0.0, 0.003, params.region_x - 0.003, params.region_x):
        lay = place_all(params, np.array([ux, 2.0]))
        assert lay.x.min() >= 0 and lay.x.max() <= params.region_x
        assert not lay.violations(params.min_spacing)


def test_aligned_layout_locally_stationary(params, rng):
    # +-lambda/20 moves of a single PA never improve the coherent sum
    user = UserSet.uniform(rng, 1, params).xy[0]
    lay = place_all(params, user)
    base = coherent_sum(params, lay, user)
    for n in range(params.n_pas):
        for m in range(params.n_waveguides):
            for step in (-params.wavelength / 20, params.wavelength / 20):
                x = np.array(lay.x)
                x[n, m] += step
                moved = PinchLayout.from_columns(x, params, validate=False)
                assert coherent_sum(params, moved, user) <= base * (1 + 1e-9)


# --- power ------------------------------------------------------------------------

@pytest.mark.parametrize("zeta", [1e3, 3.66e5, 1e6, 1e8])
def test_ee_peak_root_and_g2_one(params, zeta):
    p_star = ee_peak_power(zeta, params)
    scale = zeta * params.fixed_circuit_power
    assert abs(ee_numerator(zeta, params, p_star)) <= 1e-9 * scale
    assert g2_eval(zeta, params, p_star) == pytest.approx(1.0, abs=1e-8)


def test_ee_peak_is_maximum(params):
    zeta = 1e6
    p_star = ee_peak_power(zeta, params)
    ee = lambda P: se_ee_single(params, zeta, P)[1]
    h = 1e-7 * p_star
    slope = lambda P: (ee(P + h) - ee(P - h)) / (2 * h)
    assert abs(slope(p_star)) / (ee(p_star) / p_star) < 1e-6
    assert slope(1.1 * p_star) < 0 < slope(0.9 * p_star)


def test_g2_three_term_split(params):
    P = np.geomspace(1e-4, 1, 50)
    for zeta in (1e4, 1e6):
        assert np.allclose(sum(g2_terms(zeta, params, P)), g2_eval(zeta, params, P), rtol=1e-12, atol=0)


def test_objective_increasing_in_se(params, rng):
    for _ in range(200):
        beta = rng.uniform()
        P = rng.uniform(1e-3, 1)
        se1, se2 = np.sort(rng.uniform(0.1, 30, 2))
        if se2 - se1 < 1e-9:
            continue
        ee = lambda se: se / (P + params.fixed_circuit_power + params.rate_power_coeff * se)
        assert weighted_objective(beta, se2, ee(se2)) > weighted_objective(beta, se1, ee(se1))


@pytest.mark.parametrize("zeta", [1e4, 1e6, 1e8])
def test_ee_unimodal_and_concave(params, zeta):
    p_star = ee_peak_power(zeta, params)
    P = np.linspace(p_star / 1000, 20 * p_star, 20001)
    ee = se_ee_single(params, zeta, P)[1]
    s = np.sign(np.diff(ee))
    changes = np.flatnonzero(s[1:] != s[:-1])
    assert changes.size == 1 and s[0] > 0 and s[-1] < 0
    Q = np.linspace(0.01 * p_star, p_star, 2001)
    second = np.diff(se_ee_single(params, zeta, Q)[1], 2)
    assert np.max(second) <= 1e-8


def test_g2_decreasing_when_condition_holds(params, rng):
    checked = reported = 0
    for _ in range(200):
        zeta = 10 ** rng.uniform(2, 9)
        p = params.with_(rate_power_coeff=10 ** rng.uniform(-6, 0))
        p_star = ee_peak_power(zeta, p)
        P = np.geomspace(p_star, 100 * p_star, 2000)
        A = p.rate_power_coeff * zeta / math.log(2.0)
        if np.any(A > 1 + zeta * P):
            reported += 1
            continue
        checked += 1
        assert np.all(np.diff(g2_eval(zeta, p, P)) < 0)
    assert checked > 20
    print(f"g2 monotonicity checked on {checked} configurations; {reported} violate A <= 1 + rho")


def test_optimal_power_frozen_grid_values(params):
    # frozen from grid_power_oracle with 10^6 points
    for zeta, PT, beta, grid_p in [(1e6, 1.0, 0.5, 0.19232), (1e6, 1.0, 0.0, 0.011923),
                                   (2.5e5, 0.01, 0.3, 0.01)]:
        p = params.with_(power_budget=PT, beta=beta)
        P, _ = optimal_power(zeta, p)
        assert abs(P - grid_p) <= PT / 10**6


def test_optimal_power_matches_grid_oracle(params, rng):
    for _ in range(5):
        zeta = 10 ** rng.uniform(4, 8)
        p = params.with_(power_budget=10 ** rng.uniform(-2.5, 0.5), beta=rng.uniform())
        P, _ = optimal_power(zeta, p)
        assert abs(P - grid_power_oracle(zeta, p, grid_size=10**5)) <= p.power_budget / 10**5


def test_budget_below_peak_always_full_budget(params):
    zeta = 1e6
    p_star = ee_peak_power(zeta, params)
    for beta in np.linspace(0, 1, 11):
        p = params.with_(power_budget=0.5 * p_star, beta=beta)
        assert optimal_power(zeta, p) == (p.power_budget, BUDGET_LIMITED)


def test_beta_extremes(params):
    zeta = 1e6
    P0, r0 = optimal_power(zeta, params.with_(beta=0.0))
    assert P0 == pytest.approx(ee_peak_power(zeta, params), rel=1e-9) and r0 == INTERIOR
    assert optimal_power(zeta, params.with_(beta=1.0)) == (params.power_budget, BUDGET_LIMITED)


def test_regime_monotone_in_beta(params):
    for zeta in (1e4, 1e6, 1e8):
        regimes = [optimal_power(zeta, params.with_(beta=b))[1] for b in np.linspace(0, 1, 41)]
        first_budget = regimes.index(BUDGET_LIMITED)
        assert all(r == BUDGET_LIMITED for r in regimes[first_budget:])
        powers = [optimal_power(zeta, params.with_(beta=b))[0] for b in np.linspace(0, 1, 41)]
        assert np.all(np.diff(powers) >= 0)


def test_power_objective_maximised(params):
    zeta = 1e6
    P, _ = optimal_power(zeta, params)
    grid = np.linspace(1e-4, params.power_budget, 5001)
    assert power_objective(zeta, params, P) >= np.max(power_objective(zeta, params, grid)) - 1e-12


# --- two-stage design ---------------------------------------------------------------

def test_solution_consistent(params):
    sol = solve_single_user(params, USER)
    se, ee = se_ee_single(params, sol.zeta, sol.P_opt)
    assert (sol.SE, sol.EE) == (se, ee)
    assert 0 < sol.P_opt <= params.power_budget
    assert sol.zeta == pytest.approx(1504707.3230786175, rel=1e-12)
    assert not sol.layout.violations(params.min_spacing)


def test_placement_independent_of_power(params):
    a = solve_single_user(params.with_(power_budget=0.01), USER).layout
    b = solve_single_user(params.with_(power_budget=1.0), USER).layout
    assert np.array_equal(a.x, b.x)


def test_dominates_uniform_layout(params, rng):
    uni = uniform_layout(params)
    for beta in (0.0, 0.5, 1.0):
        p = params.with_(beta=beta)
        for _ in range(10):
            user = UserSet.uniform(rng, 1, p).xy[0]
            sol = solve_single_user(p, user)
            se, ee = se_ee_single(p, effective_gain(p, uni, user), sol.P_opt)
            assert sol.objective >= weighted_objective(beta, se, ee)
