"""Geometry, channel construction and SE/EE metrics for pinching-antenna systems.

Conventions
-----------
* Waveguide ``m`` runs along x at height ``h`` and y-coordinate ``y_m``; it is
  fed at ``[-D_x/2, y_m, h]``.
* ``PinchLayout.x`` is an ``N x M`` array: column ``m`` holds the sorted PA
  x-coordinates of waveguide ``m``.
* Users sit at ``[x_k, y_k, 0]``.
* ``H`` stacks the free-space vectors ``h_k`` as columns, so ``H^H`` carries the
  ``exp(-j 2 pi d / lambda)`` phases and ``Psi = G^H H`` is ``M x K``.
* All powers are in watts.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import LayoutInvalid

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class SystemParams:
    """Physical and power constants of the PASS downlink.

    Defaults reproduce the simulation setup used for the numerical results:
    28 GHz carrier, 4 waveguides at 3 m height, a 10 m x 10 m region,
    -90 dBm noise, 6 dB SINR target, P_f = 0.1 W and chi = 0.1.
    ``min_spacing=None`` resolves to half a free-space wavelength.
    ``noise_power`` and ``sinr_threshold`` accept a scalar (shared by all
    users) or a per-user sequence.
    """

    carrier_frequency: float = 28e9
    n_eff: float = 1.4
    noise_power: Union[float, Sequence[float]] = 1e-12
    fixed_circuit_power: float = 0.1
    rate_power_coeff: float = 0.1
    power_budget: float = 1.0
    sinr_threshold: Union[float, Sequence[float]] = float(10 ** 0.6)
    min_spacing: Optional[float] = None
    region_x: float = 10.0
    region_y: float = 10.0
    height: float = 3.0
    n_waveguides: int = 4
    n_pas: int = 3
    beta: float = 0.5

    def __post_init__(self):
        if self.min_spacing is None:
            object.__setattr__(self, "min_spacing", self.wavelength / 2.0)
        for name in ("noise_power", "sinr_threshold"):
            val = getattr(self, name)
            if not np.isscalar(val):
                object.__setattr__(self, name, tuple(float(v) for v in val))
        positive = {
            "carrier_frequency": self.carrier_frequency,
            "n_eff": self.n_eff,
            "fixed_circuit_power": self.fixed_circuit_power,
            "power_budget": self.power_budget,
            "min_spacing": self.min_spacing,
            "region_x": self.region_x,
            "region_y": self.region_y,
            "height": self.height,
        }
        for name, val in positive.items():
            if not val > 0:
                raise ValueError(f"{name} must be > 0, got {val}")
        if np.any(np.asarray(self.noise_power) <= 0):
            raise ValueError("noise_power must be > 0")
        if np.any(np.asarray(self.sinr_threshold) < 0):
            raise ValueError("sinr_threshold must be >= 0")
        if self.rate_power_coeff < 0:
            raise ValueError("rate_power_coeff must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.n_waveguides < 1 or self.n_pas < 1:
            raise ValueError("need at least one waveguide and one PA")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def guided_wavelength(self) -> float:
        return self.wavelength / self.n_eff

    @property
    def eta(self) -> float:
        return SPEED_OF_LIGHT ** 2 / (16.0 * np.pi ** 2 * self.carrier_frequency ** 2)

    @property
    def waveguide_y(self) -> np.ndarray:
        M = self.n_waveguides
        if M == 1:
            return np.array([self.region_y / 2.0])
        return np.arange(M) * (self.region_y / (M - 1))

    def noise_vector(self, K: int) -> np.ndarray:
        return _per_user(self.noise_power, K, "noise_power")

    def sinr_vector(self, K: int) -> np.ndarray:
        return _per_user(self.sinr_threshold, K, "sinr_threshold")

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


def _per_user(value, K, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(K, float(arr[0]))
    if arr.size != K:
        raise ValueError(f"{name} has {arr.size} entries for {K} users")
    return arr.copy()


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PinchLayout:
    """PA x-coordinates (``N x M``) plus the waveguide geometry they live on."""

    x: np.ndarray
    waveguide_y: np.ndarray
    height: float
    region_x: float

    @classmethod
    def from_columns(cls, x, params: SystemParams, validate: bool = True) -> "PinchLayout":
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape != (params.n_pas, params.n_waveguides):
            raise LayoutInvalid(
                f"layout shape {x.shape} != (N, M) = ({params.n_pas}, {params.n_waveguides})")
        layout = cls(_frozen(np.sort(x, axis=0)), _frozen(params.waveguide_y),
                     params.height, params.region_x)
        if validate:
            layout.check(params.min_spacing)
        return layout

    @property
    def n_pas(self) -> int:
        return self.x.shape[0]

    @property
    def n_waveguides(self) -> int:
        return self.x.shape[1]

    def violations(self, min_spacing: float, tol: float = 1e-12) -> list:
        out = []
        if np.any(self.x < -tol) or np.any(self.x > self.region_x + tol):
            out.append("PA outside [0, D_x]")
        if self.n_pas > 1:
            gaps = np.diff(self.x, axis=0)
            if np.any(gaps < min_spacing - tol):
                out.append(f"spacing {gaps.min():.6g} < {min_spacing:.6g}")
        return out

    def check(self, min_spacing: float, tol: float = 1e-12) -> None:
        bad = self.violations(min_spacing, tol)
        if bad:
            raise LayoutInvalid("; ".join(bad))

    def with_x(self, x) -> "PinchLayout":
        return replace(self, x=_frozen(np.sort(np.asarray(x, dtype=float), axis=0)))


@dataclass(frozen=True)
class UserSet:
    """K ground users; ``xy`` is ``K x 2`` (z = 0 implied)."""

    xy: np.ndarray

    def __post_init__(self):
        xy = np.atleast_2d(np.asarray(self.xy, dtype=float))
        if xy.shape[1] != 2 or xy.shape[0] < 1:
            raise ValueError("users must be a non-empty K x 2 array")
        object.__setattr__(self, "xy", _frozen(xy))

    @property
    def K(self) -> int:
        return self.xy.shape[0]

    @classmethod
    def uniform(cls, rng: np.random.Generator, K: int, params: SystemParams) -> "UserSet":
        xy = rng.uniform(size=(K, 2)) * np.array([params.region_x, params.region_y])
        return cls(xy)

    def inside(self, params: SystemParams) -> bool:
        return bool(np.all(self.xy >= 0) and np.all(self.xy[:, 0] <= params.region_x)
                    and np.all(self.xy[:, 1] <= params.region_y))


def uniform_layout(params: SystemParams) -> PinchLayout:
    """N PAs per waveguide at the cell centres of an N-way split of [0, D_x]."""
    N, M = params.n_pas, params.n_waveguides
    col = (np.arange(N) + 0.5) * params.region_x / N
    return PinchLayout.from_columns(np.tile(col[:, None], (1, M)), params)


# ---------------------------------------------------------------------------
# channels

def _as_users(users) -> UserSet:
    return users if isinstance(users, UserSet) else UserSet(users)


def pa_user_distance(x, y_wg, user_xy, height):
    """Distance from PAs at (x, y_wg, h) to user(s); broadcasts like numpy."""
    dx = np.asarray(user_xy)[..., 0] - x
    dy = np.asarray(user_xy)[..., 1] - y_wg
    return np.hypot(np.hypot(dx, dy), height)


def inwaveguide_phase(layout: PinchLayout, params: SystemParams, m: int, n: int) -> complex:
    """Unit phasor exp(-j 2 pi / lambda_g * |feed - PA|) of PA ``n`` on waveguide ``m``."""
    dist = layout.x[n, m] + params.region_x / 2.0
    return complex(np.exp(-2j * np.pi * dist / params.guided_wavelength))


def freespace_gain(layout: PinchLayout, params: SystemParams, user, m: int, n: int) -> complex:
    """LoS coefficient sqrt(eta) exp(-j 2 pi d / lambda) / d from PA (m, n) to ``user``."""
    d = float(pa_user_distance(layout.x[n, m], layout.waveguide_y[m], np.asarray(user), layout.height))
    return complex(np.sqrt(params.eta) * np.exp(-2j * np.pi * d / params.wavelength) / d)


def pa_contribution(x, y_wg, users_xy, params: SystemParams):
    """Row contribution h^H g of a PA at ``x`` to every user.

    ``x`` may be any array shape ``S``; the result has shape ``S + (K,)``
    and equals sqrt(eta) exp(-j (2 pi d / lambda + 2 pi (x + D_x/2) / lambda_g)) / d.
    """
    x = np.asarray(x, dtype=float)[..., None]
    d = pa_user_distance(x, y_wg, users_xy, params.height)
    phase = 2 * np.pi * d / params.wavelength + 2 * np.pi * (x + params.region_x / 2) / params.guided_wavelength
    return np.sqrt(params.eta) * np.exp(-1j * phase) / d


@dataclass(frozen=True)
class ChannelState:
    """``G`` (MN x M), ``H`` (MN x K) and ``Psi = G^H H`` (M x K)."""

    G: np.ndarray
    H: np.ndarray
    Psi: np.ndarray
    distances: np.ndarray  # (N, M, K)

    @property
    def A(self) -> np.ndarray:
        """Psi^H (K x M); column m is the per-waveguide aggregate channel a_m."""
        return self.Psi.conj().T


def build_channels(layout: PinchLayout, params: SystemParams, users, validate: bool = True) -> ChannelState:
    users = _as_users(users)
    if validate:
        layout.check(params.min_spacing)
    N, M, K = layout.n_pas, layout.n_waveguides, users.K
    d = pa_user_distance(layout.x[:, :, None], layout.waveguide_y[None, :, None],
                         users.xy[None, None, :, :], layout.height)
    g = np.exp(-2j * np.pi * (layout.x + params.region_x / 2) / params.guided_wavelength)  # N x M
    G = np.zeros((M * N, M), dtype=complex)
    for m in range(M):
        G[m * N:(m + 1) * N, m] = g[:, m]
    # rows of H^H hold sqrt(eta) e^{-j 2 pi d / lambda} / d, so H itself is the conjugate
    Hh = np.sqrt(params.eta) * np.exp(-2j * np.pi * d / params.wavelength) / d  # N x M x K
    H = Hh.conj().transpose(1, 0, 2).reshape(M * N, K)
    Psi = G.conj().T @ H
    for a in (G, H, Psi):
        a.setflags(write=False)
    return ChannelState(G, H, Psi, d)


# ---------------------------------------------------------------------------
# single-user metrics

def effective_gain(params: SystemParams, layout: PinchLayout, user) -> float:
    """zeta = ||h^H G||^2 / sigma^2 for one user (MRT SNR per watt)."""
    ch = build_channels(layout, params, np.atleast_2d(user), validate=False)
    row = ch.H[:, 0].conj() @ ch.G
    return float(np.vdot(row, row).real / params.noise_vector(1)[0])


def snr_single(params: SystemParams, layout: PinchLayout, user, P: float) -> float:
    if P < 0:
        raise ValueError("P must be >= 0")
    return P * effective_gain(params, layout, user)


def mrt_beamformer(channels: ChannelState, P: float, k: int = 0) -> np.ndarray:
    """Unit-norm MRT direction (h^H G)^H / ||h^H G|| scaled by sqrt(P)."""
    row = channels.H[:, k].conj() @ channels.G
    return np.sqrt(P) * row.conj() / np.linalg.norm(row)


def se_ee_from_beamformer(params: SystemParams, channels: ChannelState, w: np.ndarray, k: int = 0):
    """SE/EE of a single-user link evaluated from an explicit beamformer."""
    gamma = abs(channels.H[:, k].conj() @ channels.G @ w) ** 2 / params.noise_vector(1)[0]
    se = np.log2(1.0 + gamma)
    ee = se / (np.vdot(w, w).real + params.fixed_circuit_power + params.rate_power_coeff * se)
    return float(se), float(ee)


def se_ee_single(params: SystemParams, zeta: float, P):
    """SE = log2(1 + zeta P), EE = SE / (P + P_f + chi SE); vectorised over ``P``."""
    P = np.asarray(P, dtype=float)
    se = np.log1p(zeta * P) / np.log(2.0)
    ee = se / (P + params.fixed_circuit_power + params.rate_power_coeff * se)
    if se.ndim == 0:
        return float(se), float(ee)
    return se, ee


def se_ee_multi(params: SystemParams, P, total_power: float, noise=None):
    """Sum-rate SE with ZF SINRs P_k / sigma_k^2 and the matching EE.

    ``total_power`` is the transmit power tr(Lambda P) supplied by the caller.
    """
    P = np.asarray(P, dtype=float)
    noise = params.noise_vector(P.size) if noise is None else np.asarray(noise, dtype=float)
    se = float(np.sum(np.log1p(P / noise)) / np.log(2.0))
    ee = se / (total_power + params.fixed_circuit_power + params.rate_power_coeff * se)
    return se, float(ee)


def weighted_objective(beta: float, se: float, ee: float) -> float:
    """beta ln SE + (1 - beta) ln EE, with the 0 * ln(.) terms dropped at the endpoints."""
    val = 0.0
    if beta > 0:
        val += beta * np.log(se) if se > 0 else -np.inf
    if beta < 1:
        val += (1 - beta) * np.log(ee) if ee > 0 else -np.inf
    return float(val)
