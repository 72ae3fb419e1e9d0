"""Channel generation, CSI error models and achievable rates.

Channels follow the convention that user k receives ``(h_k^H + e^H G_k) F s``,
with ``G_k = diag(conj(h_r,k)) H_dr`` the cascaded BS-IRS-user channel.
Powers are linear milliwatts throughout; dBm only appears at I/O boundaries.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincinv


class Scenario(str, enum.Enum):
    PCU = "pcu"  # only cascaded channels uncertain
    FCU = "fcu"  # direct and cascaded channels uncertain


class ErrorKind(str, enum.Enum):
    BOUNDED = "bounded"
    STATISTICAL = "statistical"


def dbm_to_mw(p_dbm):
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def mw_to_dbm(p_mw):
    return 10.0 * np.log10(np.maximum(np.asarray(p_mw, dtype=float), 1e-300))


def rng_stream(*keys):
    """Independent generator keyed by integers, e.g. (experiment, instance, draw)."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def crandn(rng, shape, var=1.0):
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class SystemDims:
    n_bs_antennas: int  # N
    n_irs_elements: int  # M
    n_users: int  # K

    def __post_init__(self):
        if min(self.n_bs_antennas, self.n_irs_elements, self.n_users) < 1:
            raise ValueError(f"all dimensions must be >= 1, got {self}")

    @property
    def N(self):
        return self.n_bs_antennas

    @property
    def M(self):
        return self.n_irs_elements

    @property
    def K(self):
        return self.n_users


@dataclass(frozen=True)
class Geometry:
    bs_pos: tuple = (0.0, 0.0)
    irs_pos: tuple = (50.0, 10.0)
    user_center: tuple = (70.0, 0.0)
    user_radius: float = 5.0
    alpha_bu: float = 4.0
    alpha_bi: float = 2.2
    alpha_iu: float = 2.0
    pl0_db: float = 40.0

    def __post_init__(self):
        if min(self.alpha_bu, self.alpha_bi, self.alpha_iu) <= 0:
            raise ValueError("pathloss exponents must be positive")
        if self.user_radius < 0:
            raise ValueError("user_radius must be nonnegative")


def pathloss_db(distance, alpha, pl0_db=40.0):
    """Large-scale gain in dB: -PL0 - 10 alpha log10(d)."""
    return -pl0_db - 10.0 * alpha * np.log10(distance)


@dataclass(frozen=True)
class TrueChannels:
    direct: np.ndarray  # (K, N), row k is h_k
    bs_irs: np.ndarray  # (M, N), H_dr
    irs_user: np.ndarray  # (K, M), row k is h_r,k
    cascaded: np.ndarray  # (K, M, N)
    user_pos: np.ndarray = field(default=None)

    @property
    def dims(self):
        K, M, N = self.cascaded.shape
        return SystemDims(N, M, K)

    def as_estimate(self):
        """Treat these channels as the BS-side estimates."""
        return EstimatedChannels(self.direct.copy(), self.cascaded.copy())


@dataclass(frozen=True)
class EstimatedChannels:
    direct_est: np.ndarray  # (K, N)
    cascaded_est: np.ndarray  # (K, M, N)

    @property
    def dims(self):
        K, M, N = self.cascaded_est.shape
        return SystemDims(N, M, K)

    def effective(self, e):
        """Rows h_k + G_k^H e, so that user k sees ``effective(e)[k].conj() @ f``."""
        return self.direct_est + np.einsum("kmn,m->kn", self.cascaded_est.conj(), e)


def cascade(irs_user, bs_irs):
    """G_k = diag(conj(h_r,k)) H_dr for every user."""
    return irs_user.conj()[:, :, None] * bs_irs[None, :, :]


def generate_scenario(dims: SystemDims, geom: Geometry = Geometry(), seed: int = 0) -> TrueChannels:
    rng = np.random.default_rng(seed)
    N, M, K = dims.N, dims.M, dims.K
    r = geom.user_radius * np.sqrt(rng.uniform(size=K))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=K)
    users = np.asarray(geom.user_center) + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    bs, irs = np.asarray(geom.bs_pos, float), np.asarray(geom.irs_pos, float)
    d_bu = np.linalg.norm(users - bs, axis=1)
    d_iu = np.linalg.norm(users - irs, axis=1)
    d_bi = np.linalg.norm(irs - bs)
    g_bu = 10 ** (pathloss_db(d_bu, geom.alpha_bu, geom.pl0_db) / 10)
    g_iu = 10 ** (pathloss_db(d_iu, geom.alpha_iu, geom.pl0_db) / 10)
    g_bi = 10 ** (pathloss_db(d_bi, geom.alpha_bi, geom.pl0_db) / 10)
    direct = np.sqrt(g_bu)[:, None] * crandn(rng, (K, N))
    bs_irs = np.sqrt(g_bi) * crandn(rng, (M, N))
    irs_user = np.sqrt(g_iu)[:, None] * crandn(rng, (K, M))
    return TrueChannels(direct, bs_irs, irs_user, cascade(irs_user, bs_irs), users)


def error_radii(eps_sq: float, complex_dim: int, rho: float) -> float:
    """Radius xi with Pr{||err|| <= xi} = 1 - rho for err ~ CN(0, eps_sq I_d).

    ||err||^2 = (eps_sq / 2) chi2_{2d}, so xi = sqrt(eps_sq / 2 * F^-1_{2d}(1 - rho)).
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if eps_sq < 0 or complex_dim < 0:
        raise ValueError("eps_sq and complex_dim must be nonnegative")
    if eps_sq == 0.0 or complex_dim == 0:
        return 0.0
    y = chi2_half_quantile(complex_dim, 1.0 - rho)  # F^-1_{2d}(p) / 2
    return float(np.sqrt(eps_sq * y))


def chi2_half_quantile(d: int, p: float) -> float:
    """Half the chi-square(2d) quantile at p, i.e. the y with P(d, y) = p."""
    return float(gammaincinv(d, p)) if p > 0.0 else 0.0


@dataclass(frozen=True)
class ErrorModel:
    kind: ErrorKind
    xi_g: np.ndarray
    xi_h: np.ndarray
    eps_g_sq: np.ndarray
    eps_h_sq: np.ndarray
    delta_g: float
    delta_h: float
    outage_rho: np.ndarray

    @classmethod
    def from_estimates(cls, kind, est: EstimatedChannels, delta_g, delta_h, rho=0.05):
        """Variances from relative levels, eps^2 = delta^2 ||est||^2, and radii from the quantile rule."""
        K, M, N = est.cascaded_est.shape
        if not (0 <= delta_g < 1 and 0 <= delta_h < 1):
            raise ValueError("delta levels must lie in [0, 1)")
        rho = np.broadcast_to(np.asarray(rho, float), (K,)).copy()
        eps_g = delta_g ** 2 * np.sum(np.abs(est.cascaded_est) ** 2, axis=(1, 2))
        eps_h = delta_h ** 2 * np.sum(np.abs(est.direct_est) ** 2, axis=1)
        xi_g = np.array([error_radii(eps_g[k], M * N, rho[k]) for k in range(K)])
        xi_h = np.array([error_radii(eps_h[k], N, rho[k]) for k in range(K)])
        return cls(ErrorKind(kind), xi_g, xi_h, eps_g, eps_h, float(delta_g), float(delta_h), rho)

    def for_scenario(self, scenario):
        """PCU treats the direct channel as exact."""
        if Scenario(scenario) is Scenario.FCU:
            return self
        zeros = np.zeros_like(self.xi_h)
        return ErrorModel(self.kind, self.xi_g, zeros, self.eps_g_sq, zeros, self.delta_g, 0.0, self.outage_rho)


@dataclass(frozen=True)
class QosSpec:
    target_rate: np.ndarray  # bits/s/Hz
    noise_power: np.ndarray  # mW
    outage_rho: np.ndarray

    def __post_init__(self):
        if np.any(self.target_rate <= 0) or np.any(self.noise_power <= 0):
            raise ValueError("target rates and noise powers must be positive")
        if np.any(self.outage_rho <= 0) or np.any(self.outage_rho > 1):
            raise ValueError("outage probabilities must lie in (0, 1]")

    @classmethod
    def uniform(cls, K, rate, noise_dbm=-80.0, rho=0.05):
        return cls(np.full(K, float(rate)), np.full(K, float(dbm_to_mw(noise_dbm))), np.full(K, float(rho)))

    @property
    def sinr_targets(self):
        return 2.0 ** self.target_rate - 1.0


def sample_ball(rng, shape, radius, n_draws):
    """Uniform draws in the complex ball {||x|| <= radius} of the given shape."""
    d = int(np.prod(shape))
    z = crandn(rng, (n_draws, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(n_draws, 1)) ** (1.0 / (2 * d))
    return (r * z).reshape((n_draws,) + tuple(shape), order="C")


def perturb_channels(truth: TrueChannels, model: ErrorModel, seed: int) -> EstimatedChannels:
    """Estimates with ``truth = estimate + error`` and the error drawn from ``model``."""
    rng = np.random.default_rng(seed)
    K, M, N = truth.cascaded.shape
    dG = np.zeros((K, M, N), complex)
    dh = np.zeros((K, N), complex)
    for k in range(K):
        if model.kind is ErrorKind.STATISTICAL:
            dG[k] = crandn(rng, (M, N), model.eps_g_sq[k])
            dh[k] = crandn(rng, N, model.eps_h_sq[k])
        else:
            dG[k] = sample_ball(rng, (M, N), model.xi_g[k], 1)[0]
            dh[k] = sample_ball(rng, (N,), model.xi_h[k], 1)[0]
    return EstimatedChannels(truth.direct - dh, truth.cascaded - dG)


def _check_unit_modulus(e, tol=1e-9):
    if np.max(np.abs(np.abs(e) - 1.0), initial=0.0) > tol:
        raise ValueError("reflection vector must be unit-modulus")


def achievable_rate(F, e, h_k, G_k, sigma_sq, k):
    """log2(1 + SINR_k) for precoder columns F[:, i] and reflection vector e."""
    F, e, h_k, G_k = map(np.asarray, (F, e, h_k, G_k))
    N, K = F.shape
    if h_k.shape != (N,) or G_k.shape != (e.shape[0], N) or not 0 <= k < K:
        raise ValueError("dimension mismatch between F, e, h_k and G_k")
    _check_unit_modulus(e)
    row = h_k.conj() + e.conj() @ G_k
    gains = np.abs(row @ F) ** 2
    interference = gains.sum() - gains[k]
    return float(np.log2(1.0 + gains[k] / (interference + sigma_sq)))


def rates_batch(F, e, h, G, sigma_sq):
    """Rates of one user for a batch of channel realizations.

    ``h`` has shape (B, N), ``G`` shape (B, M, N); returns (B, K) with column i
    the rate user-k would get if the signal were stream i.  Use column k.
    """
    row = h.conj() + np.einsum("m,bmn->bn", e.conj(), G)
    gains = np.abs(row @ F) ** 2
    total = gains.sum(axis=1, keepdims=True)
    return np.log2(1.0 + gains / (total - gains + sigma_sq))


def all_rates(F, e, channels, sigma_sq):
    """Rates of every user at the given (true or estimated) channels."""
    if isinstance(channels, TrueChannels):
        h, G = channels.direct, channels.cascaded
    else:
        h, G = channels.direct_est, channels.cascaded_est
    sigma_sq = np.broadcast_to(sigma_sq, (h.shape[0],))
    return np.array([achievable_rate(F, e, h[k], G[k], sigma_sq[k], k) for k in range(h.shape[0])])


# JSON persistence: complex numbers are stored as [re, im] pairs.
CHANNEL_SCHEMA = "irs-robust/channels/v1"


def _encode(a):
    a = np.asarray(a)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _decode(v):
    a = np.asarray(v, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def channels_to_json(ch) -> str:
    if isinstance(ch, TrueChannels):
        doc = {"schema": CHANNEL_SCHEMA, "type": "true", "direct": _encode(ch.direct),
               "bs_irs": _encode(ch.bs_irs), "irs_user": _encode(ch.irs_user),
               "cascaded": _encode(ch.cascaded),
               "user_pos": None if ch.user_pos is None else np.asarray(ch.user_pos).tolist()}
    else:
        doc = {"schema": CHANNEL_SCHEMA, "type": "estimated", "direct": _encode(ch.direct_est),
               "cascaded": _encode(ch.cascaded_est)}
    return json.dumps(doc)


def channels_from_json(text: str):
    doc = json.loads(text)
    if doc.get("schema") != CHANNEL_SCHEMA:
        raise ValueError(f"unknown channel schema {doc.get('schema')!r}")
    if doc["type"] == "true":
        pos = doc.get("user_pos")
        return TrueChannels(_decode(doc["direct"]), _decode(doc["bs_irs"]), _decode(doc["irs_user"]),
                            _decode(doc["cascaded"]), None if pos is None else np.asarray(pos))
    return EstimatedChannels(_decode(doc["direct"]), _decode(doc["cascaded"]))
