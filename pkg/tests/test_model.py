import math

import numpy as np
import pytest

from pass_tradeoff.errors import LayoutInvalid
from pass_tradeoff.model import (SPEED_OF_LIGHT, PinchLayout, SystemParams, UserSet, build_channels,
                                 db_to_linear, dbm_to_watt, effective_gain, freespace_gain,
                                 inwaveguide_phase, mrt_beamformer, se_ee_from_beamformer,
                                 se_ee_multi, se_ee_single, snr_single, uniform_layout,
                                 weighted_objective)


def random_layout(rng, params):
    while True:
        x = np.sort(rng.uniform(0, params.region_x, (params.n_pas, params.n_waveguides)), axis=0)
        lay = PinchLayout.from_columns(x, params, validate=False)
        if not lay.violations(params.min_spacing):
            return lay


# --- parameters --------------------------------------------------------------

def test_default_constants_match_simulation_setup(params):
    # 28 GHz carrier, -90 dBm noise, 6 dB SINR target, n_eff = 1.4, M = 4, h = 3 m
    assert params.wavelength == pytest.approx(0.0107069, abs=5e-8)
    assert params.eta == pytest.approx(7.26e-7, rel=2e-3)
    assert params.noise_power == pytest.approx(dbm_to_watt(-90))
    assert params.sinr_threshold == pytest.approx(db_to_linear(6))
    assert params.n_eff == 1.4 and params.n_waveguides == 4 and params.height == 3.0
    assert params.fixed_circuit_power == 0.1 and params.rate_power_coeff == 0.1
    assert params.min_spacing == pytest.approx(params.wavelength / 2)


def test_derived_wavelengths_exact(params):
    assert params.guided_wavelength == params.wavelength / params.n_eff
    assert params.eta == SPEED_OF_LIGHT ** 2 / (16 * np.pi ** 2 * params.carrier_frequency ** 2)
    assert params.eta == pytest.approx(params.wavelength ** 2 / (16 * np.pi ** 2), rel=1e-14)


@pytest.mark.parametrize("field,value", [("beta", 1.5), ("beta", -0.1), ("power_budget", 0.0),
                                         ("rate_power_coeff", -1.0), ("n_pas", 0), ("height", -3.0)])
def test_invalid_params_rejected(field, value):
    with pytest.raises(ValueError):
        SystemParams(**{field: value})


def test_dbm_conversion():
    assert dbm_to_watt(30) == pytest.approx(1.0)
    assert dbm_to_watt(10) == pytest.approx(0.01)
    assert db_to_linear(6) == pytest.approx(3.981071705534973)


def test_waveguide_y_spacing(params):
    assert np.allclose(np.diff(params.waveguide_y), params.region_y / (params.n_waveguides - 1))


def test_per_user_noise_vector():
    p = SystemParams(noise_power=[1e-12, 2e-12])
    assert np.allclose(p.noise_vector(2), [1e-12, 2e-12])
    with pytest.raises(ValueError):
        p.noise_vector(3)


# --- layout -----------------------------------------------------------------

def test_layout_sorted_and_validated(params):
    x = np.tile(np.array([5.0, 1.0, 3.0])[:, None], (1, params.n_waveguides))
    lay = PinchLayout.from_columns(x, params)
    assert np.all(np.diff(lay.x, axis=0) > 0)
    bad = x.copy()
    bad[1] = bad[0] + params.min_spacing / 4
    with pytest.raises(LayoutInvalid):
        PinchLayout.from_columns(bad, params)
    with pytest.raises(LayoutInvalid):
        PinchLayout.from_columns(x + 20.0, params)


def test_uniform_layout_equally_spaced(params):
    lay = uniform_layout(params)
    gaps = np.diff(lay.x, axis=0)
    assert np.allclose(gaps, params.region_x / params.n_pas)
    assert lay.x.min() >= 0 and lay.x.max() <= params.region_x


def test_user_set_uniform_inside(params, rng):
    u = UserSet.uniform(rng, 50, params)
    assert u.K == 50 and u.inside(params)


# --- elementary channels ----------------------------------------------------

def _layout_at(params, x0):
    x = np.full((1, 1), x0)
    p = params.with_(n_pas=1, n_waveguides=1)
    return p, PinchLayout.from_columns(x, p, validate=False)


def test_inwaveguide_phase_periodicity(params):
    feed = -params.region_x / 2
    for dist, expected in [(0.0, 1.0), (params.guided_wavelength, 1.0), (params.guided_wavelength / 2, -1.0)]:
        p, lay = _layout_at(params, feed + dist)
        assert inwaveguide_phase(lay, p, 0, 0) == pytest.approx(expected, abs=1e-9)


def test_freespace_gain_below_pa(params):
    p, lay = _layout_at(params, 4.0)
    g = freespace_gain(lay, p, np.array([4.0, p.waveguide_y[0]]), 0, 0)
    assert abs(g) == pytest.approx(math.sqrt(p.eta) / p.height, rel=1e-12)


@pytest.mark.parametrize("ux", [1.0, 4.0, 9.5])
def test_freespace_gain_inverse_distance(params, ux):
    p, lay = _layout_at(params, 0.5)
    y = p.waveguide_y[0]
    d = math.dist((0.5, y, p.height), (ux, y + 1.0, 0.0))
    g = freespace_gain(lay, p, np.array([ux, y + 1.0]), 0, 0)
    assert abs(g) == pytest.approx(math.sqrt(p.eta) / d, rel=1e-12)


def test_channel_invariants(params, rng):
    users = UserSet.uniform(rng, 3, params)
    for _ in range(5):
        lay = random_layout(rng, params)
        ch = build_channels(lay, params, users)
        nz = ch.G[np.abs(ch.G) > 0]
        assert nz.size == params.n_pas * params.n_waveguides
        assert np.max(np.abs(np.abs(nz) - 1)) < 1e-12
        assert np.allclose(np.abs(ch.H) * ch.distances.transpose(1, 0, 2).reshape(-1, 3),
                           math.sqrt(params.eta), rtol=1e-12)
        # H holds h_k as columns; its conjugate carries the -2 pi d / lambda phase
        d = ch.distances.transpose(1, 0, 2).reshape(-1, 3)
        err = np.angle(np.conj(ch.H) * np.exp(2j * np.pi * d / params.wavelength))
        assert np.max(np.abs(err)) < 1e-9
        assert np.allclose(ch.Psi, ch.G.conj().T @ ch.H, rtol=0, atol=1e-15)


def test_psi_entrywise_sum_matches_product(params, rng):
    # oracle: the per-waveguide sum sum_n conj(h_{m,k,n}) g_{m,n} built from scratch;
    # Psi = G^H H is its complex conjugate
    users = UserSet.uniform(rng, 2, params)
    lay = random_layout(rng, params)
    ch = build_channels(lay, params, users)
    N, M = lay.x.shape
    for m in range(M):
        for k in range(2):
            s = 0j
            for n in range(N):
                d = math.dist((lay.x[n, m], lay.waveguide_y[m], params.height), (*users.xy[k], 0.0))
                h = np.conj(math.sqrt(params.eta) * np.exp(-2j * np.pi * d / params.wavelength) / d)
                g = np.exp(-2j * np.pi * (lay.x[n, m] + params.region_x / 2) / params.guided_wavelength)
                s += np.conj(h) * g
            assert abs(np.conj(ch.Psi[m, k]) - s) <= 1e-12 * abs(s)


def test_single_path_psi(params):
    p = params.with_(n_pas=1, n_waveguides=1)
    lay = PinchLayout.from_columns(np.array([[3.0]]), p)
    ch = build_channels(lay, p, np.array([[3.0, 2.0]]))
    d = math.sqrt((p.region_y / 2 - 2.0) ** 2 + p.height ** 2)
    assert ch.Psi.shape == (1, 1)
    assert abs(ch.Psi[0, 0]) == pytest.approx(math.sqrt(p.eta) / d, rel=1e-12)


def test_user_permutation_permutes_psi(params, rng):
    users = UserSet.uniform(rng, 3, params)
    lay = random_layout(rng, params)
    perm = [2, 0, 1]
    a = build_channels(lay, params, users).Psi
    b = build_channels(lay, params, UserSet(users.xy[perm])).Psi
    assert np.array_equal(a[:, perm], b)


# --- single-user metrics ----------------------------------------------------

def test_effective_gain_matches_waveguide_coherent_sum(params):
    # frozen from the direct per-waveguide magnitude sum for a user at (3.7, 6.2)
    user = np.array([3.7, 6.2])
    assert effective_gain(params, uniform_layout(params), user) == pytest.approx(366026.7951580615, rel=1e-10)


def test_effective_gain_oracle_random(params, rng):
    for _ in range(5):
        lay = random_layout(rng, params)
        user = rng.uniform([0, 0], [10, 10])
        tot = 0.0
        for m in range(params.n_waveguides):
            s = 0j
            for n in range(params.n_pas):
                x, y = lay.x[n, m], lay.waveguide_y[m]
                d = math.sqrt((x - user[0]) ** 2 + (y - user[1]) ** 2 + params.height ** 2)
                phi = 2 * math.pi * d / params.wavelength + 2 * math.pi * (x + 5) / params.guided_wavelength
                s += math.sqrt(params.eta) * complex(math.cos(phi), -math.sin(phi)) / d
            tot += abs(s) ** 2
        assert effective_gain(params, lay, user) == pytest.approx(tot / params.noise_power, rel=1e-10)


def test_snr_linear_in_power(params):
    lay, user = uniform_layout(params), np.array([4.0, 4.0])
    assert snr_single(params, lay, user, 0.0) == 0.0
    assert snr_single(params, lay, user, 2e-3) == pytest.approx(2 * snr_single(params, lay, user, 1e-3))
    with pytest.raises(ValueError):
        snr_single(params, lay, user, -1.0)


def test_se_ee_single_identities(params, rng):
    assert se_ee_single(params, 1e6, 0.0) == (0.0, 0.0)
    zeta = 10 ** rng.uniform(3, 9, 100)
    P = rng.uniform(0, 2, 100)
    se, ee = se_ee_single(params, zeta, P)
    assert np.allclose(ee * (P + params.fixed_circuit_power + params.rate_power_coeff * se), se, rtol=1e-13)
    p = params.with_(rate_power_coeff=0.0, fixed_circuit_power=1e9)
    se, ee = se_ee_single(p, 1e6, 0.3)
    assert ee == pytest.approx(se / 1e9, rel=1e-9)


def test_mrt_matches_scalar_model(params, rng):
    user = rng.uniform([0, 0], [10, 10])
    lay = random_layout(rng, params)
    ch = build_channels(lay, params, user[None])
    for P in (1e-3, 0.5):
        w = mrt_beamformer(ch, P)
        assert np.vdot(w, w).real == pytest.approx(P)
        se, ee = se_ee_from_beamformer(params, ch, w)
        se2, ee2 = se_ee_single(params, effective_gain(params, lay, user), P)
        assert se == pytest.approx(se2, rel=1e-9) and ee == pytest.approx(ee2, rel=1e-9)


# --- multi-user metrics -----------------------------------------------------

def test_se_ee_multi_reduces_to_single(params):
    lam11, P1 = 3.0e6, 2e-8
    se, ee = se_ee_multi(params, [P1], lam11 * P1)
    se1, ee1 = se_ee_single(params, 1 / (params.noise_power * lam11), lam11 * P1)
    assert se == pytest.approx(se1, rel=1e-12) and ee == pytest.approx(ee1, rel=1e-12)


def test_se_multi_additive(params):
    assert se_ee_multi(params, [0.0, 0.0], 0.0)[0] == 0.0
    s1 = se_ee_multi(params, [3e-12], 1e-3)[0]
    s2 = se_ee_multi(params, [3e-12, 3e-12], 1e-3)[0]
    assert s2 == pytest.approx(2 * s1)


def test_weighted_objective_endpoints():
    assert weighted_objective(1.0, 4.0, 0.0) == pytest.approx(math.log(4.0))
    assert weighted_objective(0.0, 0.0, 2.0) == pytest.approx(math.log(2.0))
    assert weighted_objective(0.5, 4.0, 2.0) == pytest.approx(0.5 * math.log(8.0))
