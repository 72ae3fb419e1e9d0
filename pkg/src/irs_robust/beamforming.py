"""Shared pieces of the alternating-optimization designs.

Both designs solve their subproblems in normalized units: channels are scaled
so the strongest per-user channel has unit norm and the precoder is scaled so
the noise power is one.  This keeps interior-point solvers well conditioned
when raw channel gains are around 1e-6.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from . import affine as af
from .channel_model import EstimatedChannels, ErrorModel, QosSpec, Scenario
from .conic_builder import ProgramBuilder, Status, solve


RETRY_TOL = 1e-6  # looser solver tolerance for one retry after a numerical failure
RECOVERABLE = (Status.NUMERICAL_FAILURE, Status.ITERATION_LIMIT)


class CcpStatus(str, enum.Enum):
    CONVERGED = "Converged"
    NON_CONVERGENT = "NonConvergent"


@dataclass(frozen=True)
class PenaltyCcpParams:
    lambda0: float = 1.0
    gamma: float = 3.0
    lambda_max: float = 1e5
    chi: float = 1e-5
    nu: float = 1e-4
    t_max: int = 30
    restart_budget: int = 3

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.lambda_max > self.lambda0 > 0:
            raise ValueError("need lambda_max > lambda0 > 0")
        if not (self.chi > 0 and self.nu > 0):
            raise ValueError("chi and nu must be positive")


@dataclass(frozen=True)
class AoSettings:
    tol: float = 1e-4
    max_iter: int = 30
    restarts: int = 3
    solver_tol: float = 1e-8
    ccp: PenaltyCcpParams = PenaltyCcpParams()


@dataclass
class BeamformingSolution:
    F: np.ndarray  # (N, K)
    e: np.ndarray  # (M,)
    power: float  # mW, ||F||_F^2
    feasible: bool
    status: str = "Optimal"

    @property
    def power_dbm(self):
        return float(10 * np.log10(self.power)) if self.power > 0 else -np.inf


@dataclass
class AoState:
    F: np.ndarray
    e: np.ndarray
    beta: np.ndarray
    iteration: int = 0
    power_trace: list = field(default_factory=list)


@dataclass
class AoTrace:
    power_trace: list = field(default_factory=list)  # mW after each accepted F-step
    f_status: list = field(default_factory=list)
    e_status: list = field(default_factory=list)
    rank_ratios: list = field(default_factory=list)  # per F-step, per user (outage design only)
    iter_times: list = field(default_factory=list)  # seconds per outer iteration
    converged: bool = False
    stop_reason: str = ""
    restarts_used: int = 0

    @property
    def iterations(self):
        return max(len(self.power_trace) - 1, 0)

    def relative_changes(self):
        p = np.asarray(self.power_trace, float)
        return np.abs(np.diff(p)) / p[:-1] if len(p) > 1 else np.zeros(0)


@dataclass
class Normalized:
    """A design problem in normalized units (unit noise, unit-scale channels)."""

    h: np.ndarray  # (K, N)
    G: np.ndarray  # (K, M, N)
    sigma_sq: np.ndarray  # (K,)
    gamma: np.ndarray  # SINR targets 2^R - 1
    xi_g: np.ndarray
    xi_h: np.ndarray
    eps_g_sq: np.ndarray
    eps_h_sq: np.ndarray
    rho: np.ndarray
    precoder_scale: float  # F_normalized = precoder_scale * F

    @property
    def K(self):
        return self.h.shape[0]

    @property
    def M(self):
        return self.G.shape[1]

    @property
    def N(self):
        return self.h.shape[1]

    def effective(self, e):
        return self.h + np.einsum("kmn,m->kn", self.G.conj(), e)

    def to_normalized(self, F):
        return None if F is None else F * self.precoder_scale

    def from_normalized(self, F):
        return F / self.precoder_scale


def normalize(est: EstimatedChannels, model: ErrorModel, qos: QosSpec, scenario=Scenario.FCU) -> Normalized:
    model = model.for_scenario(scenario)
    h, G = est.direct_est, est.cascaded_est
    ref = max(np.linalg.norm(h, axis=1).max(), np.linalg.norm(G.reshape(len(G), -1), axis=1).max())
    a = 1.0 / ref if ref > 0 else 1.0
    sig_ref = float(np.max(qos.noise_power))
    b = 1.0 / (a * np.sqrt(sig_ref))
    return Normalized(h * a, G * a, qos.noise_power / sig_ref, qos.sinr_targets,
                      model.xi_g * a, model.xi_h * a, model.eps_g_sq * a * a, model.eps_h_sq * a * a,
                      np.asarray(qos.outage_rho, float), b)


def random_phases(rng, M):
    return np.exp(2j * np.pi * rng.uniform(size=M))


def power_objective(bld: ProgramBuilder, F):
    """Epigraph t >= ||vec F||; returns t (power is t^2)."""
    t = bld.real()
    bld.add_soc(t, F.vec())
    return t


def nominal_precoder(prob: Normalized, e, tol=1e-8):
    """Minimum-power precoder meeting the SINR targets at the estimated channels.

    Classical SOCP with the phase of each useful term fixed real.  Returns
    (F in normalized units, status).
    """
    N, K = prob.N, prob.K
    heff = prob.effective(e)
    bld = ProgramBuilder()
    F = bld.complex((N, K))
    t = power_objective(bld, F)
    for k in range(K):
        c = af.vdot(heff[k], F[:, k])
        others = [i for i in range(K) if i != k]
        interf = af.concatenate([(F.H @ heff[k])[others], np.array([np.sqrt(prob.sigma_sq[k])])])
        bld.add_soc(c.real / np.sqrt(prob.gamma[k]), interf)
        bld.add_eq(c.imag)
    bld.minimize(t)
    sol = solve_retry(bld.build(), tol)
    if not sol.ok:
        return None, sol.status
    return F.value(sol.x), sol.status


def solve_retry(prog, tol):
    """Solve ``prog``; after a numerical failure retry once at a looser tolerance."""
    sol = solve(prog, tol)
    if sol.status is Status.NUMERICAL_FAILURE:
        sol = solve(prog, max(tol, RETRY_TOL))
    return sol


def unit_modulus_rows(bld: ProgramBuilder, e, e_t):
    """Penalty-CCP slack rows for |e_m| = 1, linearized at e_t.  Returns b (2M,)."""
    M = len(e_t)
    b = bld.real(2 * M)
    bld.add_nonneg(b)
    # |e_t|^2 - 2 Re(conj(e) e_t) <= b_m - 1
    bld.add_nonneg(b[:M] - 1.0 - np.abs(e_t) ** 2 + 2.0 * (e.conj() * e_t).real)
    # |e_m|^2 <= 1 + b_{M+m}  as  ||(2 e_m, b_{M+m})|| <= b_{M+m} + 2
    for m in range(M):
        bld.add_soc(b[M + m] + 2.0, af.stack([2.0 * e[m].real, 2.0 * e[m].imag, b[M + m]]))
    return b


def penalty_ccp(build, e_init, rng, params: PenaltyCcpParams, tol=1e-8):
    """Run the penalty convex-concave procedure for a unit-modulus vector.

    ``build(bld, e)`` adds the problem-specific variables and constraints for
    the complex affine vector ``e`` and returns ``(gain, readout)``: ``gain`` is
    the real affine quantity to maximize and ``readout(x)`` extracts extra
    results from a solver point.  Returns (e, extras, status, inner_iterations).
    """
    M = len(e_init)
    e_t = np.asarray(e_init, complex)
    total = 0
    for attempt in range(params.restart_budget + 1):
        if attempt > 0:
            e_t = random_phases(rng, M)
        lam = params.lambda0
        last = None  # (readout, slack sum) of the last solved subproblem
        for _ in range(params.t_max):
            total += 1
            bld = ProgramBuilder()
            e = bld.complex(M)
            gain, readout = build(bld, e)
            b = unit_modulus_rows(bld, e, e_t)
            bld.maximize(gain - lam * b.sum())
            prog = bld.build()
            sol = solve_retry(prog, tol)
            if not sol.ok:
                # large penalties can stall the interior point method after the slacks
                # have already vanished; the current iterate is then accepted
                if last is not None and last[1] <= params.chi:
                    return np.exp(1j * np.angle(e_t)), last[0], CcpStatus.CONVERGED, total
                break
            e_new = e.value(sol.x)
            b_sum = float(np.abs(b.value(sol.x).real).sum())
            step = np.abs(e_new - e_t).sum()
            e_t = e_new
            last = (readout(sol.x), b_sum)
            lam = min(params.gamma * lam, params.lambda_max)
            if b_sum <= params.chi and step <= params.nu:
                return np.exp(1j * np.angle(e_t)), last[0], CcpStatus.CONVERGED, total
    return None, None, CcpStatus.NON_CONVERGENT, total


def run_ao(prob: Normalized, f_step, e_step, rng, settings: AoSettings):
    """Alternate precoder and reflection updates.

    ``f_step(e, F_prev)`` returns (F, status, info) with F in normalized units
    (``F_prev`` is None on the first call).  ``e_step(F, e)`` returns
    (e_new or None, status).  When the F-step fails with a recoverable solver
    status, the reflection step is restarted from random phases.  An F-step that
    still fails or raises the power is rejected and the previous iterate is kept.
    """
    trace = AoTrace()
    F = None
    for attempt in range(settings.restarts + 1):
        e = random_phases(rng, prob.M)
        t0 = time.perf_counter()
        F, status, info = f_step(e, None)
        trace.f_status.append(str(status.value if hasattr(status, "value") else status))
        if F is not None:
            trace.iter_times.append(time.perf_counter() - t0)
            if info:
                trace.rank_ratios.append(info)
            break
        trace.restarts_used = attempt + 1
    if F is None:
        trace.stop_reason = "infeasible"
        return None, None, trace
    power = float(np.sum(np.abs(F) ** 2))
    trace.power_trace.append(power)
    for _ in range(settings.max_iter):
        t0 = time.perf_counter()
        e_init = e
        for attempt in range(settings.restarts + 1):
            e_new, e_status = e_step(F, e_init)
            trace.e_status.append(str(e_status.value if hasattr(e_status, "value") else e_status))
            e_try = e if e_new is None else e_new
            F_new, status, info = f_step(e_try, F)
            trace.f_status.append(str(status.value if hasattr(status, "value") else status))
            if F_new is not None or status not in RECOVERABLE or e_new is None:
                break
            # the solver stalled at this reflection vector: restart the CCP elsewhere
            trace.restarts_used += 1
            e_init = random_phases(rng, prob.M)
        trace.iter_times.append(time.perf_counter() - t0)
        if F_new is None:
            trace.converged = True
            trace.stop_reason = "f-step-failed"
            break
        p_new = float(np.sum(np.abs(F_new) ** 2))
        if p_new > power * (1.0 + 1e-6):
            trace.converged = True
            trace.stop_reason = "no-improvement"
            break
        rel = (power - p_new) / power
        F, e, power = F_new, e_try, p_new
        trace.power_trace.append(power)
        if info:
            trace.rank_ratios.append(info)
        if rel < settings.tol:
            trace.converged = True
            trace.stop_reason = "tolerance"
            break
    else:
        trace.stop_reason = "max-iterations"
    return F, e, trace


def finish(prob: Normalized, F, e, trace: AoTrace):
    """Map a normalized AO result back to physical units."""
    if F is None:
        M = prob.M
        return BeamformingSolution(np.zeros((prob.N, prob.K), complex), np.ones(M, complex), np.inf, False,
                                   "Infeasible"), trace
    F = prob.from_normalized(F)
    scale = prob.precoder_scale ** 2
    trace.power_trace = [p / scale for p in trace.power_trace]
    return BeamformingSolution(F, e, float(np.sum(np.abs(F) ** 2)), True, "Optimal"), trace


def status_name(status):
    return status.value if isinstance(status, (Status, CcpStatus)) else str(status)
