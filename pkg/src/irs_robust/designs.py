"""Method registry shared by validation and the experiment runner."""

from __future__ import annotations

import time

import numpy as np

from .beamforming import AoSettings, AoTrace, BeamformingSolution
from .channel_model import ErrorKind, ErrorModel, EstimatedChannels, QosSpec, Scenario
from .outage_design import ao_outage, rank_one_extract, solve_precoder_outage
from .worst_case_design import ao_bounded

METHODS = ("pcu-bounded", "fcu-bounded", "pcu-stat", "fcu-stat", "no-irs-baseline")


def method_parts(method):
    """(scenario, error kind) of a method name."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method == "no-irs-baseline":
        return Scenario.FCU, ErrorKind.STATISTICAL
    scen, kind = method.split("-")
    return Scenario(scen), ErrorKind.BOUNDED if kind == "bounded" else ErrorKind.STATISTICAL


def error_model(method, est: EstimatedChannels, delta_g, delta_h, rho=0.05):
    scenario, kind = method_parts(method)
    return ErrorModel.from_estimates(kind, est, delta_g, delta_h, rho).for_scenario(scenario)


def without_irs(est: EstimatedChannels):
    K, _, N = est.cascaded_est.shape
    return EstimatedChannels(est.direct_est, np.zeros((K, 0, N), complex))


def _baseline(est, delta_h, qos, settings):
    """Outage design on the direct link only (a single SDR solve, no reflection vector)."""
    est0 = without_irs(est)
    model = error_model("no-irs-baseline", est0, 0.0, delta_h, qos.outage_rho)
    e = np.zeros(0, complex)
    trace = AoTrace()
    t0 = time.perf_counter()
    sdr = solve_precoder_outage(Scenario.FCU, e, est0, model, qos, settings.solver_tol)
    trace.iter_times.append(time.perf_counter() - t0)
    trace.f_status.append(str(sdr.status.value))
    if sdr.Gamma is None:
        trace.stop_reason = "infeasible"
        K, N = est.direct_est.shape
        return BeamformingSolution(np.zeros((N, K), complex), e, np.inf, False, "Infeasible"), trace
    F, _ = rank_one_extract(sdr.Gamma, est0.direct_est)
    power = float(np.sum(np.abs(F) ** 2))
    trace.power_trace.append(power)
    trace.converged, trace.stop_reason = True, "single-step"
    return BeamformingSolution(F, e, power, True, "Optimal"), trace


def run_method(method, est: EstimatedChannels, delta_g, delta_h, qos: QosSpec, init_seed=0,
               settings: AoSettings = AoSettings()):
    """Run one design method on an instance.  Returns (BeamformingSolution, AoTrace)."""
    scenario, kind = method_parts(method)
    if method == "no-irs-baseline":
        return _baseline(est, delta_h, qos, settings)
    model = error_model(method, est, delta_g, delta_h, qos.outage_rho)
    if kind is ErrorKind.BOUNDED:
        return ao_bounded(scenario, est, model, qos, init_seed, settings)
    return ao_outage(scenario, est, model, qos, init_seed, settings)
