"""Outage-constrained power minimization under Gaussian CSI errors.

Each rate-outage constraint is a Gaussian quadratic chance constraint.  With
error covariance eps^2 I the aggregate error seen by user k,
``dh + dG^H e``, is CN(0, s I_N) with s = eps_h^2 + eps_g^2 M (PCU: eps_h = 0),
so the Bernstein-type safe approximation only needs s, Phi_k and the
effective channel.  The precoder step is an SDR over Gamma_k = f_k f_k^H
followed by a constructive rank-one recovery; the reflection step is a
penalty-CCP loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import affine as af
from .affine import Affine
from .beamforming import (AoSettings, Normalized, PenaltyCcpParams, finish, normalize, penalty_ccp, run_ao,
                          solve_retry)
from .channel_model import EstimatedChannels, ErrorModel, QosSpec, Scenario, rng_stream
from .conic_builder import ProgramBuilder

ALPHA_W = 100.0  # weight of the slack objective in normalized units
EIG_FLOOR = -1e-10


@dataclass
class QuadraticChanceForm:
    """Pr{x^H U x + 2 Re{u^H x} + c >= 0} >= 1 - rho for x ~ CN(0, I)."""

    U: object
    u: object
    c: object
    rho: float


@dataclass
class SimplifiedStats:
    s: float
    trace_term: object  # s Tr(Phi)
    frob_term: object  # s ||Phi||_F (numeric Phi only)
    soc_vector: object  # [s vec(Phi); sqrt(2 s) Phi heff]
    eig_shift: object  # s Phi, enters y I + s Phi >= 0


@dataclass
class SdrSolution:
    Gamma: list
    objective: float
    status: object
    x: np.ndarray = None
    y: np.ndarray = None


def bernstein_conditions(bld: ProgramBuilder, form: QuadraticChanceForm):
    """Add the deterministic safe approximation of a quadratic chance constraint.

    Tr(U) - sqrt(2 ln(1/rho)) x - ln(1/rho) y + c >= 0,
    ||[vec(U); sqrt(2) u]|| <= x,  y I + U >= 0,  y >= 0.
    Returns the slack expressions (x, y).
    """
    if not 0 < form.rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    U = af.as_affine(form.U)
    n = U.shape[0]
    x, y = bld.real(), bld.real()
    L = np.log(1.0 / form.rho)
    bld.add_nonneg(y)
    bld.add_nonneg((U.trace() + form.c).real - np.sqrt(2 * L) * x - L * y)
    bld.add_soc(x, af.concatenate([U.vec(), np.sqrt(2.0) * af.as_affine(form.u)]))
    bld.add_hermitian_psd(U + y * np.eye(n))
    return x, y


def bernstein_holds(form: QuadraticChanceForm, tol=1e-9):
    """Numeric check of the safe approximation with the best slacks."""
    U, u, c = np.asarray(form.U), np.asarray(form.u), float(np.real(form.c))
    L = np.log(1.0 / form.rho)
    x = np.sqrt(np.linalg.norm(U) ** 2 + 2 * np.linalg.norm(u) ** 2)
    y = max(np.linalg.eigvalsh(-U).max(), 0.0)
    return np.trace(U).real - np.sqrt(2 * L) * x - L * y + c >= -tol


def error_scale(eps_g_sq, eps_h_sq, M, scenario):
    """Variance s of the aggregate error dh + dG^H e for a unit-modulus e."""
    return eps_g_sq * M + (eps_h_sq if Scenario(scenario) is Scenario.FCU else 0.0)


def simplified_stats(Phi, eps_g_sq, eps_h_sq, M, scenario, heff=None) -> SimplifiedStats:
    s = error_scale(eps_g_sq, eps_h_sq, M, scenario)
    trace_term = s * (Phi.trace() if isinstance(Phi, Affine) else np.trace(Phi))
    frob = None if isinstance(Phi, Affine) else s * np.linalg.norm(Phi)
    soc = None
    if heff is not None:
        Ph = Phi @ heff
        soc = af.concatenate([s * af.as_affine(Phi).vec(), np.sqrt(2 * s) * af.as_affine(Ph)]) \
            if isinstance(Phi, Affine) or isinstance(heff, Affine) else \
            np.concatenate([s * Phi.reshape(-1, order="F"), np.sqrt(2 * s) * Ph])
    return SimplifiedStats(s, trace_term, frob, soc, s * Phi)


def explicit_chance_form(Phi, heff, e, eps_g_sq, eps_h_sq, sigma_sq, scenario, rho=0.05):
    """Dense chance form over the stacked normalized error (for verification).

    PCU: x = vec(dG)/eps_g with U = eps_g^2 (Phi^T kron E).
    FCU: x = [dh/eps_h; conj(vec(dG))/eps_g] with the block matrix U~.
    vec is column-major in both cases.
    """
    c = float(np.real(np.vdot(heff, Phi @ heff))) - sigma_sq
    eg, eh = np.sqrt(eps_g_sq), np.sqrt(eps_h_sq)
    if Scenario(scenario) is Scenario.PCU:
        E = np.outer(e, e.conj())
        U = eps_g_sq * np.kron(Phi.T, E)
        u = eg * np.kron((Phi @ heff).conj(), e)
        return QuadraticChanceForm(U, u, c, rho)
    E = np.outer(e, e.conj())
    U = np.block([[eps_h_sq * Phi, eh * eg * np.kron(Phi, e[None, :])],
                  [eh * eg * np.kron(Phi, e.conj()[:, None]), eps_g_sq * np.kron(Phi, E.T)]])
    u = np.concatenate([eh * (Phi @ heff), eg * np.kron(Phi @ heff, e.conj())])
    return QuadraticChanceForm(U, u, c, rho)


def _phi(Gammas, k, gamma_k):
    others = [Gammas[i] for i in range(len(Gammas)) if i != k]
    P = Gammas[k] / gamma_k
    for G in others:
        P = P - G
    return P


def phi_from_precoder(F, gamma):
    """Phi_k = f_k f_k^H / gamma_k - F_-k F_-k^H for every user."""
    return [_phi([np.outer(F[:, i], F[:, i].conj()) for i in range(F.shape[1])], k, gamma[k])
            for k in range(F.shape[1])]


def _sdr_build(prob: Normalized, scenario, e):
    N, K = prob.N, prob.K
    heff = prob.effective(e)
    bld = ProgramBuilder()
    Gammas = [bld.hermitian(N) for _ in range(K)]
    slacks = []
    for k in range(K):
        bld.add_hermitian_psd(Gammas[k])
        Phi = _phi(Gammas, k, prob.gamma[k])
        s = error_scale(prob.eps_g_sq[k], prob.eps_h_sq[k], prob.M, scenario)
        c = af.vdot(heff[k], Phi @ heff[k]).real - prob.sigma_sq[k]
        form = QuadraticChanceForm(s * Phi, np.sqrt(s) * (Phi @ heff[k]), c, prob.rho[k])
        slacks.append(bernstein_conditions(bld, form))
    obj = Gammas[0].trace()
    for G in Gammas[1:]:
        obj = obj + G.trace()
    bld.minimize(obj.real)
    return bld, Gammas, slacks


def _sdr_step(prob: Normalized, scenario, e, tol=1e-8):
    bld, Gammas, slacks = _sdr_build(prob, scenario, e)
    prog = bld.build()
    sol = solve_retry(prog, tol)
    if not sol.ok:
        return SdrSolution(None, np.inf, sol.status), prog
    G_val = [0.5 * (G.value(sol.x) + G.value(sol.x).conj().T) for G in Gammas]
    xs = np.array([float(np.real(x.value(sol.x))) for x, _ in slacks])
    ys = np.array([float(np.real(y.value(sol.x))) for _, y in slacks])
    return SdrSolution(G_val, sol.objective_value, sol.status, xs, ys), prog


def build_precoder_program(scenario, e, channels_est, model, qos):
    """The SDR conic program in normalized units (for inspection and comparisons)."""
    prob = normalize(channels_est, model, qos, scenario)
    return _sdr_build(prob, Scenario(scenario), e)[0].build()


def _psd_sqrt(G):
    w, V = np.linalg.eigh(0.5 * (G + G.conj().T))
    w = np.maximum(w, EIG_FLOOR)
    return (V * np.sqrt(np.maximum(w, 0.0))) @ V.conj().T


def rank_ratio(G):
    w = np.linalg.eigvalsh(0.5 * (G + G.conj().T))[::-1]
    return float(max(w[1], 0.0) / w[0]) if len(w) > 1 and w[0] > 0 else 0.0


def rank_one_extract(Gammas, heff):
    """Rank-one matrices Gamma~_k = Gamma^1/2 P_k Gamma^1/2 and precoder columns.

    P_k projects onto Gamma_k^1/2 h_k.  Returns (F, Gamma_tilde list).
    """
    K = len(Gammas)
    N = Gammas[0].shape[0]
    F = np.zeros((N, K), complex)
    tilde = []
    for k in range(K):
        S = _psd_sqrt(Gammas[k])
        v = S @ heff[k]
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            raise ValueError(f"user {k}: effective channel is orthogonal to Gamma_k (degenerate)")
        P = np.outer(v, v.conj()) / nv ** 2
        Gt = S @ P @ S
        Gt = 0.5 * (Gt + Gt.conj().T)
        w, V = np.linalg.eigh(Gt)
        F[:, k] = V[:, -1] * np.sqrt(max(w[-1], 0.0))
        tilde.append(Gt)
    return F, tilde


def eig_slack(Phi, s):
    """Smallest y with y I + s Phi >= 0 and y >= 0."""
    return max(float(np.linalg.eigvalsh(-s * Phi).max()), 0.0)


def linearized_signal(f, e, e0, h, G, gamma):
    """First-order lower bound of |(h + G^H e)^H f|^2 / gamma around e0 (affine in e)."""
    c = af.vdot(h + (e @ G.conj() if isinstance(e, Affine) else G.conj().T @ e), f)
    c0 = np.vdot(h + G.conj().T @ e0, f)
    return (2.0 * (np.conj(c0) * c).real - abs(c0) ** 2) / gamma


def _reflect_step(prob: Normalized, scenario, F, e_prev, rng, params: PenaltyCcpParams, tol=1e-8):
    K, M = prob.K, prob.M
    Phis = phi_from_precoder(F, prob.gamma)

    def build(bld, e):
        alpha = bld.real(K)
        bld.add_nonneg(alpha)
        for k in range(K):
            Phi = Phis[k]
            s = error_scale(prob.eps_g_sq[k], prob.eps_h_sq[k], M, scenario)
            Lg = np.log(1.0 / prob.rho[k])
            heff = prob.h[k] + e @ prob.G[k].conj()
            x = bld.real()
            bld.add_soc(x, af.concatenate([np.array([s * np.linalg.norm(Phi)]), np.sqrt(2 * s) * (Phi @ heff)]))
            signal = linearized_signal(F[:, k], e, e_prev, prob.h[k], prob.G[k], prob.gamma[k])
            expr = signal + s * np.trace(Phi).real - np.sqrt(2 * Lg) * x - Lg * eig_slack(Phi, s) \
                - prob.sigma_sq[k] - alpha[k]
            if K > 1:
                # -||F_-k^H heff||^2 >= -ell via ||[2 v; ell - 1]|| <= ell + 1
                others = [i for i in range(K) if i != k]
                v = F[:, others].conj().T @ heff
                ell = bld.real()
                bld.add_soc(ell + 1.0, af.concatenate([2.0 * v, af.as_affine(ell - 1.0).reshape(1)]))
                expr = expr - ell
            bld.add_nonneg(expr.real)
        return ALPHA_W * alpha.sum(), lambda xx: alpha.value(xx).real

    return penalty_ccp(build, e_prev, rng, params, tol)


def solve_precoder_outage(scenario, e, channels_est: EstimatedChannels, model: ErrorModel, qos: QosSpec, tol=1e-8):
    """SDR precoder step for fixed e; Gamma returned in physical units (mW)."""
    scenario = Scenario(scenario)
    prob = normalize(channels_est, model, qos, scenario)
    sdr, _ = _sdr_step(prob, scenario, e, tol)
    if sdr.Gamma is None:
        return sdr
    scale = prob.precoder_scale ** 2
    sdr.Gamma = [G / scale for G in sdr.Gamma]
    sdr.objective = sdr.objective / scale
    return sdr


def solve_reflect_outage(scenario, F, e, channels_est, model, qos, params=PenaltyCcpParams(), seed=0, tol=1e-8):
    scenario = Scenario(scenario)
    prob = normalize(channels_est, model, qos, scenario)
    e_new, alphas, status, _ = _reflect_step(prob, scenario, prob.to_normalized(F), e,
                                             np.random.default_rng(seed), params, tol)
    return e_new, alphas, status


def ao_outage(scenario, channels_est, model, qos, init_seed=0, settings=AoSettings()):
    """Alternating optimization for the outage-constrained design."""
    scenario = Scenario(scenario)
    prob = normalize(channels_est, model, qos, scenario)
    rng = rng_stream(init_seed, 2)

    def f_step(e, F_prev):
        sdr, _ = _sdr_step(prob, scenario, e, settings.solver_tol)
        if sdr.Gamma is None:
            return None, sdr.status, None
        F, _ = rank_one_extract(sdr.Gamma, prob.effective(e))
        return F, sdr.status, [rank_ratio(G) for G in sdr.Gamma]

    def e_step(F, e):
        e_new, _, st, _ = _reflect_step(prob, scenario, F, e, rng, settings.ccp, settings.solver_tol)
        return e_new, st

    F, e, trace = run_ao(prob, f_step, e_step, rng, settings)
    return finish(prob, F, e, trace)
