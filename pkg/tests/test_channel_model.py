import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chi2

from irs_robust.channel_model import (ErrorKind, ErrorModel, QosSpec, Scenario, SystemDims, achievable_rate,
                                      all_rates, cascade, channels_from_json, channels_to_json, chi2_half_quantile,
                                      dbm_to_mw, error_radii, generate_scenario, mw_to_dbm, pathloss_db,
                                      perturb_channels, rates_batch, sample_ball)

from conftest import crand


def test_dbm_round_trip():
    assert np.isclose(dbm_to_mw(-80.0), 1e-8)
    assert np.isclose(mw_to_dbm(dbm_to_mw(17.3)), 17.3)


def test_pathloss_reference():
    assert pathloss_db(1.0, 3.0) == -40.0
    assert np.isclose(pathloss_db(10.0, 2.0), -60.0)


def test_scenario_shapes_and_cascade():
    ch = generate_scenario(SystemDims(4, 3, 2), seed=5)
    assert ch.direct.shape == (2, 4) and ch.bs_irs.shape == (3, 4) and ch.irs_user.shape == (2, 3)
    for k in range(2):
        assert np.allclose(ch.cascaded[k], np.diag(ch.irs_user[k].conj()) @ ch.bs_irs)
    assert np.allclose(cascade(ch.irs_user, ch.bs_irs), ch.cascaded)
    again = generate_scenario(SystemDims(4, 3, 2), seed=5)
    assert np.array_equal(again.direct, ch.direct)


def test_dims_validation():
    with pytest.raises(ValueError):
        SystemDims(0, 2, 2)


@given(st.integers(1, 40), st.floats(0.001, 0.5))
def test_quantile_matches_chi2(d, rho):
    y = chi2_half_quantile(d, 1 - rho)
    assert np.isclose(2 * y, chi2.ppf(1 - rho, 2 * d), rtol=1e-9)
    # forward check through the Erlang CDF, independent of the inverse routine
    k = np.arange(d)
    cdf = 1 - np.exp(-y) * np.sum(np.exp(k * np.log(y) - np.cumsum(np.r_[0, np.log(k[1:])])))
    assert np.isclose(cdf, 1 - rho, rtol=1e-9)


def test_radius_covers_mass():
    rng = np.random.default_rng(0)
    eps_sq, d, rho = 0.3, 6, 0.1
    xi = error_radii(eps_sq, d, rho)
    draws = np.sqrt(eps_sq / 2) * (rng.standard_normal((200_000, d)) + 1j * rng.standard_normal((200_000, d)))
    frac = np.mean(np.linalg.norm(draws, axis=1) <= xi)
    assert abs(frac - (1 - rho)) < 0.005
    assert error_radii(0.0, d, rho) == 0.0
    with pytest.raises(ValueError):
        error_radii(1.0, 3, 1.5)


def test_error_model_levels():
    est = generate_scenario(SystemDims(3, 2, 2), seed=1).as_estimate()
    m = ErrorModel.from_estimates(ErrorKind.BOUNDED, est, 0.1, 0.2)
    assert np.allclose(m.eps_g_sq, 0.01 * np.sum(np.abs(est.cascaded_est) ** 2, axis=(1, 2)))
    assert np.allclose(m.eps_h_sq, 0.04 * np.sum(np.abs(est.direct_est) ** 2, axis=1))
    pcu = m.for_scenario(Scenario.PCU)
    assert np.all(pcu.xi_h == 0) and np.all(pcu.eps_h_sq == 0) and np.array_equal(pcu.xi_g, m.xi_g)
    with pytest.raises(ValueError):
        ErrorModel.from_estimates(ErrorKind.BOUNDED, est, 1.2, 0.0)


@given(st.integers(0, 1000), st.floats(0.01, 10.0))
def test_ball_samples_inside(seed, radius):
    x = sample_ball(np.random.default_rng(seed), (3, 2), radius, 50)
    assert x.shape == (50, 3, 2)
    assert np.all(np.linalg.norm(x.reshape(50, -1), axis=1) <= radius * (1 + 1e-12))


def test_perturb_bounded_inside_radius():
    ch = generate_scenario(SystemDims(3, 4, 2), seed=2)
    model = ErrorModel.from_estimates(ErrorKind.BOUNDED, ch.as_estimate(), 0.1, 0.1)
    est = perturb_channels(ch, model, 7)
    for k in range(2):
        assert np.linalg.norm(ch.cascaded[k] - est.cascaded_est[k]) <= model.xi_g[k] * (1 + 1e-12)
        assert np.linalg.norm(ch.direct[k] - est.direct_est[k]) <= model.xi_h[k] * (1 + 1e-12)


@given(st.integers(0, 10_000))
def test_rate_matches_sinr_formula(seed):
    rng = np.random.default_rng(seed)
    N, M, K = 3, 2, 3
    F, h, G = crand(rng, N, K), crand(rng, N), crand(rng, M, N)
    e = np.exp(2j * np.pi * rng.uniform(size=M))
    row = h.conj() + e.conj() @ G
    for k in range(K):
        sig = abs(row @ F[:, k]) ** 2
        intf = sum(abs(row @ F[:, i]) ** 2 for i in range(K) if i != k)
        assert np.isclose(achievable_rate(F, e, h, G, 0.3, k), np.log2(1 + sig / (intf + 0.3)))
        batch = rates_batch(F, e, h[None], G[None], 0.3)[0, k]
        assert np.isclose(batch, achievable_rate(F, e, h, G, 0.3, k))


def test_rate_rejects_bad_inputs(rng):
    F, h, G = crand(rng, 3, 2), crand(rng, 3), crand(rng, 2, 3)
    with pytest.raises(ValueError):
        achievable_rate(F, np.array([1.0, 0.5]), h, G, 1.0, 0)
    with pytest.raises(ValueError):
        achievable_rate(F, np.ones(3), h, G, 1.0, 0)


def test_json_round_trip():
    ch = generate_scenario(SystemDims(2, 3, 2), seed=3)
    back = channels_from_json(channels_to_json(ch))
    assert np.array_equal(back.cascaded, ch.cascaded) and np.array_equal(back.user_pos, ch.user_pos)
    est = channels_from_json(channels_to_json(ch.as_estimate()))
    assert np.array_equal(est.direct_est, ch.direct)
    with pytest.raises(ValueError):
        channels_from_json('{"schema": "other"}')


def test_all_rates_and_qos():
    ch = generate_scenario(SystemDims(2, 2, 2), seed=4)
    qos = QosSpec.uniform(2, 2.0)
    assert np.allclose(qos.sinr_targets, 3.0)
    r = all_rates(np.zeros((2, 2)), np.ones(2), ch, qos.noise_power)
    assert np.allclose(r, 0.0)
    with pytest.raises(ValueError):
        QosSpec.uniform(2, -1.0)
