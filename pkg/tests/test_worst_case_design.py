import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irs_robust import affine as af
from irs_robust.beamforming import AoSettings, normalize, random_phases
from irs_robust.channel_model import (ErrorKind, ErrorModel, QosSpec, Scenario, SystemDims, all_rates,
                                      generate_scenario, sample_ball)
from irs_robust.conic_builder import ProgramBuilder
from irs_robust.worst_case_design import (ao_bounded, build_in_lmi, build_signal_lmi_pcu,
                                          lemma3_coefficients, lemma4_coefficients, solve_precoder_bounded,
                                          solve_reflect_bounded, surrogate_value)

from conftest import crand


def _tuple(seed, N, M):
    rng = np.random.default_rng(seed)
    e, e0 = (np.exp(2j * np.pi * rng.uniform(size=M)) for _ in range(2))
    return rng, crand(rng, N), crand(rng, N), e, e0, crand(rng, N), crand(rng, M, N)


@given(st.integers(0, 100_000), st.integers(1, 4), st.integers(1, 4), st.floats(0.0, 2.0))
def test_pcu_surrogate_lower_bound(seed, N, M, scale):
    rng, f, f0, e, e0, h, G = _tuple(seed, N, M)
    dG = scale * crand(rng, M, N)
    exact = abs(np.vdot(h + (G + dG).conj().T @ e, f)) ** 2
    x = dG.conj().reshape(-1, order="F")
    assert surrogate_value(lemma3_coefficients(f, e, f0, e0, h, G), x) <= exact + 1e-9 * (1 + exact)
    at0 = lemma3_coefficients(f0, e0, f0, e0, h, G)
    exact0 = abs(np.vdot(h + (G + dG).conj().T @ e0, f0)) ** 2
    assert np.isclose(surrogate_value(at0, x), exact0, rtol=1e-8, atol=1e-8)


@given(st.integers(0, 100_000), st.integers(1, 4), st.integers(1, 4), st.floats(0.0, 2.0))
def test_fcu_surrogate_lower_bound(seed, N, M, scale):
    rng, f, f0, e, e0, h, G = _tuple(seed, N, M)
    dh, dG = scale * crand(rng, N), scale * crand(rng, M, N)
    exact = abs(np.vdot(h + dh + (G + dG).conj().T @ e, f)) ** 2
    x = np.concatenate([dh, dG.conj().reshape(-1, order="F")])
    assert surrogate_value(lemma4_coefficients(f, e, f0, e0, h, G), x) <= exact + 1e-9 * (1 + exact)


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_affine_coefficients_match_numeric(seed):
    rng, f, f0, e, e0, h, G = _tuple(seed, 2, 3)
    bld = ProgramBuilder()
    fv = bld.complex(2)
    x = rng.standard_normal(bld.n)
    sym = lemma4_coefficients(fv, e, f0, e0, h, G)
    num = lemma4_coefficients(fv.value(x), e, f0, e0, h, G)
    assert np.allclose(sym.A_tilde.value(x), num.A_tilde)
    assert np.allclose(sym.a_tilde.value(x), num.a_tilde)
    assert np.isclose(af.value(sym.a_tilde_scalar, x), num.a_tilde_scalar)


def test_signal_lmi_is_hermitian(rng):
    f, f0, h = crand(rng, 3), crand(rng, 3), crand(rng, 3)
    G, e = crand(rng, 2, 3), np.exp(1j * rng.uniform(size=2))
    lmi = build_signal_lmi_pcu(lemma3_coefficients(f, e, f0, e, h, G), 0.5, 2.0, 0.1, 1.0)
    M = lmi.const
    assert np.allclose(M, M.conj().T)


def test_in_lmi_psd_iff_worst_case_holds(rng):
    """The interference LMI with the best multiplier is PSD exactly when the worst case meets beta."""
    N, M = 3, 2
    Fm, h, G = crand(rng, N, 2), crand(rng, N), crand(rng, M, N)
    e = np.exp(1j * rng.uniform(size=M))
    xi, sigma_sq = 0.3, 0.1
    # worst case over ||dG||_F <= xi of ||(h^H + e^H (G + dG)) Fm||^2: shift along e
    t = Fm.conj().T @ (h + G.conj().T @ e)
    worst = (np.linalg.norm(t) + xi * np.sqrt(M) * np.linalg.norm(Fm, 2)) ** 2 + sigma_sq
    mus = np.linspace(1e-4, 50, 4000)

    def feasible(beta):
        return any(np.linalg.eigvalsh(build_in_lmi(Fm, e, h, G, beta, sigma_sq, mu, xi).const).min() >= -1e-10
                   for mu in mus)

    assert feasible(worst * 1.01)
    assert not feasible(worst * 0.95)


@given(st.integers(0, 100_000), st.integers(2, 4))
@settings(max_examples=30)
def test_reduced_in_lmi_is_leading_block_and_nominal_schur(seed, K):
    rng = np.random.default_rng(seed)
    N, M = 3, 2
    Fm, h, G = crand(rng, N, K - 1), crand(rng, N), crand(rng, M, N)
    e = np.exp(2j * np.pi * rng.uniform(size=M))
    beta, sigma_sq, mu = rng.uniform(0, 20), 0.5, rng.uniform(0, 1)
    full = build_in_lmi(Fm, e, h, G, beta, sigma_sq, mu, 0.3).const
    red = build_in_lmi(Fm, e, h, G, beta, sigma_sq, mu, 0.3, reduced=True).const
    assert red.shape == (K, K)
    assert np.allclose(red, full[:K, :K])
    # Schur complement: PSD exactly when beta - sigma^2 - mu M >= ||F^H h_eff||^2
    slack = beta - sigma_sq - mu * M - np.linalg.norm(Fm.conj().T @ (h + G.conj().T @ e)) ** 2
    assert (np.linalg.eigvalsh(red).min() >= -1e-9) == (slack >= -1e-9)


def _instance(N, M, K, seed, dg, dh, rate=1.0):
    est = generate_scenario(SystemDims(N, M, K), seed=seed).as_estimate()
    return est, ErrorModel.from_estimates(ErrorKind.BOUNDED, est, dg, dh), QosSpec.uniform(K, rate)


@pytest.mark.parametrize("scenario", ["pcu", "fcu"])
def test_compressed_matches_full_lmi(scenario):
    est, model, qos = _instance(3, 2, 2, 11, 0.05, 0.05)
    e = random_phases(np.random.default_rng(0), 2)
    F0, _, _ = solve_precoder_bounded(scenario, None, e, est, model, qos, compress=True)
    Fc, bc, _ = solve_precoder_bounded(scenario, F0, e, est, model, qos, compress=True)
    Ff, bf, _ = solve_precoder_bounded(scenario, F0, e, est, model, qos, compress=False)
    pc, pf = np.sum(np.abs(Fc) ** 2), np.sum(np.abs(Ff) ** 2)
    assert np.isclose(pc, pf, rtol=1e-5)


def test_zero_error_single_user_closed_form():
    est, model, qos = _instance(4, 3, 1, 2, 0.0, 0.0)
    e = random_phases(np.random.default_rng(1), 3)
    F, _, st = solve_precoder_bounded("fcu", None, e, est, model, qos)
    heff = est.effective(e)[0]
    oracle = qos.noise_power[0] * qos.sinr_targets[0] / np.linalg.norm(heff) ** 2
    assert np.isclose(np.sum(np.abs(F) ** 2), oracle, rtol=1e-4)


def test_precoder_step_certified_on_samples():
    """Every sampled error in the balls keeps the rate target for the solved F-step."""
    est, model, qos = _instance(3, 3, 2, 4, 0.02, 0.02)
    e = random_phases(np.random.default_rng(2), 3)
    F0, _, _ = solve_precoder_bounded("fcu", None, e, est, model, qos)
    F, _, _ = solve_precoder_bounded("fcu", F0, e, est, model, qos)
    rng = np.random.default_rng(3)
    K, M, N = est.cascaded_est.shape
    for k in range(K):
        dG = sample_ball(rng, (M, N), model.xi_g[k], 500)
        dh = sample_ball(rng, (N,), model.xi_h[k], 500)
        row = (est.direct_est[k] + dh).conj() + np.einsum("m,bmn->bn", e.conj(), est.cascaded_est[k] + dG)
        g = np.abs(row @ F) ** 2
        rate = np.log2(1 + g[:, k] / (g.sum(1) - g[:, k] + qos.noise_power[k]))
        assert rate.min() >= qos.target_rate[k] - 1e-6


def test_reflect_step_returns_unit_modulus():
    est, model, qos = _instance(3, 3, 2, 5, 0.01, 0.0)
    e = random_phases(np.random.default_rng(4), 3)
    F, _, _ = solve_precoder_bounded("pcu", None, e, est, model, qos)
    F, _, _ = solve_precoder_bounded("pcu", F, e, est, model, qos)
    e_new, alphas, status = solve_reflect_bounded("pcu", F, e, est, model, qos)
    assert e_new is not None and np.allclose(np.abs(e_new), 1.0)
    assert np.all(alphas >= -1e-7)


def test_ao_monotone_and_feasible():
    est, model, qos = _instance(3, 3, 2, 6, 0.01, 0.02)
    sol, trace = ao_bounded("fcu", est, model, qos, 0, AoSettings(max_iter=6))
    assert sol.feasible
    p = np.asarray(trace.power_trace)
    assert np.all(np.diff(p) <= 1e-6 * p[:-1])
    assert np.all(all_rates(sol.F, sol.e, est, qos.noise_power) >= qos.target_rate - 1e-6)


def test_infeasible_instance_reported():
    est, model, qos = _instance(2, 2, 3, 7, 0.3, 0.3, rate=6.0)
    sol, trace = ao_bounded("fcu", est, model, qos, 0, AoSettings(max_iter=2, restarts=1))
    assert not sol.feasible and trace.stop_reason == "infeasible" and sol.power == np.inf


def test_normalization_round_trip():
    est, model, qos = _instance(3, 2, 2, 8, 0.05, 0.05)
    prob = normalize(est, model, qos, Scenario.FCU)
    F = crand(np.random.default_rng(0), 3, 2)
    assert np.allclose(prob.from_normalized(prob.to_normalized(F)), F)
    assert np.isclose(np.abs(prob.h).max() <= 1.0, True)
