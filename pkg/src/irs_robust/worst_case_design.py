"""Worst-case power minimization under norm-bounded CSI errors.

The useful-signal power is replaced by a quadratic lower bound in the error
vector (first-order Taylor bound around the previous iterate), and the
semi-infinite constraints over the error balls become LMIs via the
S-procedure (signal) and the sign-definiteness lemma (interference).

Error stacking: ``x = vec(conj(dG))`` for PCU and ``x = [dh; vec(conj(dG))]`` for
FCU, with column-major vec.  The surrogate reads

    x^H A x + 2 Re{a^T x} + a_scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from . import affine as af
from .affine import Affine
from .beamforming import (AoSettings, Normalized, PenaltyCcpParams, finish, nominal_precoder,
                          normalize, penalty_ccp, power_objective, run_ao, solve_retry)
from .channel_model import EstimatedChannels, ErrorModel, QosSpec, Scenario, rng_stream
from .conic_builder import ProgramBuilder

ALPHA_W = 30.0


@dataclass
class Lemma3Coefficients:
    A: object  # Hermitian MN x MN (ndarray or Affine)
    a: object  # length MN
    a_scalar: object  # real


@dataclass
class Lemma4Coefficients:
    A_tilde: object  # Hermitian (N+MN) x (N+MN)
    a_tilde: object
    a_tilde_scalar: object


def _signal_value(f, e, h, G):
    """(h^H + e^H G) f, affine if one of f, e is affine."""
    if isinstance(e, Affine):
        return af.vdot(h, f) + af.vdot(e, G @ f)
    return af.vdot(h + G.conj().T @ e, f)


def _surrogate(q, q0, c, c0):
    """Taylor lower bound of |c + x^H q|^2 around (c0, q0) as (A, a, a_scalar)."""
    A = af.outer(q, q0.conj()) + af.outer(q0, _conj(q)) - np.outer(q0, q0.conj())
    w = np.conj(c0) * q + _conj(c) * q0 - np.conj(c0) * q0
    scalar = 2.0 * (np.conj(c0) * c).real - abs(c0) ** 2
    return A, _conj(w), scalar


def _conj(v):
    return v.conj() if isinstance(v, Affine) else np.conj(v)


def lemma3_coefficients(f_k, e, f_k_prev, e_prev, h_k, G_hat_k) -> Lemma3Coefficients:
    """Surrogate of |(h^H + e^H (G + dG)) f|^2 over x = vec(conj(dG))."""
    q = af.kron(f_k, _conj(e))
    q0 = np.kron(f_k_prev, np.conj(e_prev))
    c = _signal_value(f_k, e, h_k, G_hat_k)
    c0 = _signal_value(f_k_prev, e_prev, h_k, G_hat_k)
    return Lemma3Coefficients(*_surrogate(q, q0, c, c0))


def lemma4_coefficients(f_k, e, f_k_prev, e_prev, h_k, G_hat_k) -> Lemma4Coefficients:
    """Surrogate over x = [dh; vec(conj(dG))] when both channels are uncertain."""
    if isinstance(f_k, Affine) or isinstance(e, Affine):
        q = af.concatenate([f_k, af.kron(f_k, _conj(e))])
    else:
        q = np.concatenate([f_k, np.kron(f_k, np.conj(e))])
    q0 = np.concatenate([f_k_prev, np.kron(f_k_prev, np.conj(e_prev))])
    c = _signal_value(f_k, e, h_k, G_hat_k)
    c0 = _signal_value(f_k_prev, e_prev, h_k, G_hat_k)
    return Lemma4Coefficients(*_surrogate(q, q0, c, c0))


def surrogate_value(coeffs, x):
    """Evaluate x^H A x + 2 Re{a^T x} + a_scalar for numeric coefficients."""
    A, a, s = (coeffs.A, coeffs.a, coeffs.a_scalar) if isinstance(coeffs, Lemma3Coefficients) else \
        (coeffs.A_tilde, coeffs.a_tilde, coeffs.a_tilde_scalar)
    return float((np.vdot(x, A @ x) + 2.0 * (a @ x).real + s).real)


def _multiplier(blocks, basis_sizes):
    """blockdiag(varpi_i I) restricted to a basis aligned with the multiplier blocks."""
    n = af._common_n([v for v, _ in blocks])
    diag = [af.as_affine(v, n) * np.ones(r) for (v, _), r in zip(blocks, basis_sizes)]
    d = af.concatenate(diag)
    size = sum(basis_sizes)
    eye = np.eye(size)
    return Affine(d.const[:, None] * eye, d.lin[:, :, None] * eye[None])


def signal_lmi(coeffs, beta, blocks, rate, alpha=None, basis=None):
    """S-procedure LMI [[D + A, conj(a)], [a^T, C]] as a Hermitian affine matrix.

    ``blocks`` lists (multiplier, radius, size) per error block in stacking order,
    D = blockdiag(multiplier_i I) and C = a_scalar - beta (2^R - 1) - sum
    multiplier_i radius_i^2 (- alpha).  ``basis`` = (U, sizes) projects onto an
    orthonormal basis that is block-aligned with D and contains the range of
    A and a; the projected LMI is equivalent because the complement block is
    D itself, which is PSD when the multipliers are nonnegative.
    """
    A, a, scalar = (coeffs.A, coeffs.a, coeffs.a_scalar) if isinstance(coeffs, Lemma3Coefficients) else \
        (coeffs.A_tilde, coeffs.a_tilde, coeffs.a_tilde_scalar)
    A, a = af.as_affine(A), af.as_affine(a)
    if basis is None:
        sizes = [size for _, _, size in blocks]
    else:
        U, sizes = basis
        Uh = U.conj().T
        A = Uh @ A @ U
        a = a @ U  # projected a = conj(U^H conj(a)) = U^T a
    D = _multiplier([(v, r) for v, r, _ in blocks], sizes)
    C = af.as_affine(scalar) - beta * (2.0 ** rate - 1.0)
    for v, r, _ in blocks:
        C = C - v * r ** 2
    if alpha is not None:
        C = C - alpha
    L = A.shape[0]
    col = a.conj().reshape(L, 1)
    return af.bmat([[D + A, col], [col.H, C.real.reshape(1, 1)]])


def build_signal_lmi_pcu(coeffs: Lemma3Coefficients, beta_k, varpi_gk, xi_gk, R_k, alpha_k=None, basis=None):
    MN = coeffs.A.shape[0] if basis is None else None
    return signal_lmi(coeffs, beta_k, [(varpi_gk, xi_gk, MN)], R_k, alpha_k,
                      None if basis is None else (basis, [basis.shape[1]]))


def build_signal_lmi_fcu(coeffs: Lemma4Coefficients, beta_k, varpi_hk, varpi_gk, xi_hk, xi_gk, N, R_k,
                         alpha_k=None, basis=None):
    """``basis`` is (U, [r_h, r_g]) with U block-diagonal over the (dh, dG) split."""
    MN = coeffs.A_tilde.shape[0] - N
    return signal_lmi(coeffs, beta_k, [(varpi_hk, xi_hk, N), (varpi_gk, xi_gk, MN)], R_k, alpha_k, basis)


def build_in_lmi(F_minus_k, e, h_k, G_k, beta_k, sigma_sq, mu_g, xi_g, mu_h=None, xi_h=0.0, reduced=False):
    """Interference LMI: ||(h^H + e^H (G + dG)) F_-k|| ^2 + sigma^2 <= beta for all bounded errors.

    Emits [[beta - sigma^2 - mu_g M - mu_h, t^H, 0, 0], [t, I, xi_g F^H, xi_h F^H],
    [0, xi_g F, mu_g I, 0], [0, xi_h F, 0, mu_h I]] with t = F_-k^H (h + G^H e);
    the dh rows are present only when ``mu_h`` is given.  ``reduced=True`` keeps
    only the leading K x K block.
    """
    M = G_k.shape[0]
    N = G_k.shape[1]
    heff = h_k + (G_k.conj().T @ e if not isinstance(e, Affine) else e @ G_k.conj())
    if isinstance(F_minus_k, Affine) and isinstance(heff, Affine):
        raise TypeError("F and e cannot both be variables")
    FH = F_minus_k.H if isinstance(F_minus_k, Affine) else F_minus_k.conj().T
    t = FH @ heff
    Km1 = F_minus_k.shape[1]
    corner = af.as_affine(beta_k) - sigma_sq - mu_g * M
    if mu_h is not None:
        corner = corner - mu_h
    corner = corner.real.reshape(1, 1)
    tcol = af.as_affine(t).reshape(Km1, 1)
    Fm = F_minus_k
    if reduced:
        return af.bmat([[corner, tcol.H], [tcol, np.eye(Km1)]])
    rows = [[corner, tcol.H, np.zeros((1, N))], [tcol, np.eye(Km1), xi_g * FH],
            [np.zeros((N, 1)), xi_g * Fm, af.as_affine(mu_g) * np.eye(N)]]
    if mu_h is not None:
        rows[0].append(np.zeros((1, N)))
        rows[1].append(xi_h * FH)
        rows[2].append(np.zeros((N, N)))
        rows.append([np.zeros((N, 1)), xi_h * Fm, np.zeros((N, N)), af.as_affine(mu_h) * np.eye(N)])
    return af.bmat(rows)


def build_in_lmi_pcu(F_minus_k, e, h_k, G_k, beta_k, sigma_sq, mu_gk, xi_gk, reduced=False):
    return build_in_lmi(F_minus_k, e, h_k, G_k, beta_k, sigma_sq, mu_gk, xi_gk, reduced=reduced)


def _f_basis(e, scenario, N):
    """Basis containing the signal coefficients when e is fixed and F varies."""
    u = np.conj(e) / np.linalg.norm(e)
    Ug = np.kron(np.eye(N), u[:, None])
    if scenario is Scenario.PCU:
        return Ug, [N]
    return block_diag(np.eye(N), Ug), [N, N]


def _e_basis(f, scenario, M):
    """Basis containing the signal coefficients when f is fixed and e varies."""
    nf = np.linalg.norm(f)
    if nf < 1e-9:
        return None
    Ug = np.kron((f / nf)[:, None], np.eye(M))
    if scenario is Scenario.PCU:
        return Ug, [M]
    return block_diag((f / nf)[:, None], Ug), [1, M]


def _add_user_constraints(bld, prob, scenario, k, F, e, F0, e0, beta, alpha=None, compress=True,
                          reduced_in=False):
    """Signal and interference LMIs of user k; exactly one of F, e is affine."""
    N, M, K = prob.N, prob.M, prob.K
    f = F[:, k]
    h, G = prob.h[k], prob.G[k]
    others = [i for i in range(K) if i != k]
    vg = bld.real()
    bld.add_nonneg(vg)
    e_is_var = isinstance(e, Affine)
    if compress:
        basis = _e_basis(F0[:, k], scenario, M) if e_is_var else _f_basis(e, scenario, N)
    else:
        basis = None
    if scenario is Scenario.PCU:
        coeffs = lemma3_coefficients(f, e, F0[:, k], e0, h, G)
        blocks = [(vg, prob.xi_g[k], M * N)]
    else:
        vh = bld.real()
        bld.add_nonneg(vh)
        coeffs = lemma4_coefficients(f, e, F0[:, k], e0, h, G)
        blocks = [(vh, prob.xi_h[k], N), (vg, prob.xi_g[k], M * N)]
    bld.add_hermitian_psd(signal_lmi(coeffs, beta[k], blocks, np.log2(1.0 + prob.gamma[k]), alpha, basis))
    if K == 1:
        bld.add_nonneg(beta[k] - prob.sigma_sq[k])
        return
    mg = bld.real()
    bld.add_nonneg(mg)
    mh = None
    if scenario is Scenario.FCU:
        mh = bld.real()
        bld.add_nonneg(mh)
    Fm = F[:, others]
    bld.add_hermitian_psd(build_in_lmi(Fm, e, h, G, beta[k], prob.sigma_sq[k], mg, prob.xi_g[k],
                                       mh, prob.xi_h[k] if mh is not None else 0.0, reduced=reduced_in))


def _precoder_step(prob: Normalized, scenario, e, F_prev, tol=1e-8, compress=True):
    """Normalized-unit F-subproblem; returns (F, beta, status)."""
    N, K = prob.N, prob.K
    bld = ProgramBuilder()
    F = bld.complex((N, K))
    beta = bld.real(K)
    t = power_objective(bld, F)
    for k in range(K):
        _add_user_constraints(bld, prob, scenario, k, F, e, F_prev, e, beta, compress=compress)
    bld.minimize(t)
    sol = solve_retry(bld.build(), tol)
    if not sol.ok:
        return None, None, sol.status
    return F.value(sol.x), beta.value(sol.x).real, sol.status


def _reflect_step(prob: Normalized, scenario, F, e_prev, rng, params: PenaltyCcpParams, tol=1e-8,
                  compress=True, reduced_in=False):
    K = prob.K

    def build(bld, e):
        alpha = bld.real(K)
        beta = bld.real(K)
        bld.add_nonneg(alpha)
        for k in range(K):
            _add_user_constraints(bld, prob, scenario, k, F, e, F, e_prev, beta, alpha[k], compress, reduced_in)
        return ALPHA_W * alpha.sum(), lambda x: alpha.value(x).real

    return penalty_ccp(build, e_prev, rng, params, tol)


def _check_scenario(scenario):
    return Scenario(scenario)


def solve_precoder_bounded(scenario, F_prev, e, channels_est: EstimatedChannels, model: ErrorModel,
                           qos: QosSpec, tol=1e-8, compress=True):
    """Worst-case precoder for fixed e, linearized at (F_prev, e).

    ``F_prev=None`` uses the nominal minimum-power precoder as the expansion
    point.  Returns (F, beta, status) in physical units (beta in mW).
    """
    scenario = _check_scenario(scenario)
    prob = normalize(channels_est, model, qos, scenario)
    F0 = prob.to_normalized(F_prev)
    if F0 is None:
        F0, st = nominal_precoder(prob, e, tol)
        if F0 is None:
            return None, None, st
    F, beta, status = _precoder_step(prob, scenario, e, F0, tol, compress)
    if F is None:
        return None, None, status
    return prob.from_normalized(F), beta * np.max(qos.noise_power), status


def solve_reflect_bounded(scenario, F, e, channels_est, model, qos, params=PenaltyCcpParams(), seed=0, tol=1e-8,
                          compress=True, reduced_in=False):
    """Penalty-CCP reflection update for fixed F; returns (e, alphas, status)."""
    scenario = _check_scenario(scenario)
    prob = normalize(channels_est, model, qos, scenario)
    e_new, alphas, status, _ = _reflect_step(prob, scenario, prob.to_normalized(F), e, np.random.default_rng(seed),
                                             params, tol, compress, reduced_in)
    return e_new, alphas, status


def ao_bounded(scenario, channels_est, model, qos, init_seed=0, settings=AoSettings(), compress=True):
    """Alternating optimization for the worst-case design."""
    scenario = _check_scenario(scenario)
    prob = normalize(channels_est, model, qos, scenario)
    rng = rng_stream(init_seed, 1)

    def f_step(e, F_prev):
        if F_prev is None:
            F_prev, st = nominal_precoder(prob, e, settings.solver_tol)
            if F_prev is None:
                return None, st, None
        F, _, st = _precoder_step(prob, scenario, e, F_prev, settings.solver_tol, compress)
        return F, st, None

    def e_step(F, e):
        e_new, _, st, _ = _reflect_step(prob, scenario, F, e, rng, settings.ccp, settings.solver_tol, compress)
        return e_new, st

    F, e, trace = run_ao(prob, f_step, e_step, rng, settings)
    return finish(prob, F, e, trace)
