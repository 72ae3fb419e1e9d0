"""Empirical certification of designs.

``mc_outage`` estimates outage under Gaussian errors and can only refute an
outage design; ``worst_case_rate`` searches the error balls for a rate
violation and can only refute a worst-case design.  Neither is a proof.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from .channel_model import (ErrorKind, ErrorModel, EstimatedChannels, QosSpec, SystemDims, crandn,
                            generate_scenario, rng_stream)

REPORT_SCHEMA = "irs-robust/validation/v1"


@dataclass
class ValidationReport:
    per_user_empirical_outage: list = field(default_factory=list)
    per_user_worst_rate: list = field(default_factory=list)
    n_samples: int = 0
    search_budget: int = 0
    confidence_halfwidth: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"schema": REPORT_SCHEMA, **asdict(self)})

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.pop("schema", None) != REPORT_SCHEMA:
            raise ValueError("not a validation report")
        return cls(**doc)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["user", "empirical_outage", "halfwidth", "worst_rate", "n_samples", "search_budget"])
        K = max(len(self.per_user_empirical_outage), len(self.per_user_worst_rate))
        for k in range(K):
            out = self.per_user_empirical_outage[k] if self.per_user_empirical_outage else ""
            hw = self.confidence_halfwidth[k] if self.confidence_halfwidth else ""
            wr = self.per_user_worst_rate[k] if self.per_user_worst_rate else ""
            w.writerow([k, out, hw, wr, self.n_samples, self.search_budget])
        return buf.getvalue()


def wilson_halfwidth(successes, n, confidence=0.95):
    ci = binomtest(int(successes), int(n)).proportion_ci(confidence, method="wilson")
    return 0.5 * (ci.high - ci.low)


def _user_rates(F, e, h, G, sigma_sq, k):
    """Rate of user k for batches h (B, N) and G (B, M, N)."""
    row = h.conj() + np.einsum("m,bmn->bn", e.conj(), G)
    gains = np.abs(row @ F) ** 2
    sig = gains[:, k]
    return np.log2(1.0 + sig / (gains.sum(axis=1) - sig + sigma_sq))


def mc_outage(F, e, channels_est: EstimatedChannels, model: ErrorModel, qos: QosSpec, n_samples=10_000, seed=0,
              batch=2_000):
    """Fraction of Gaussian error draws for which each user's rate falls below target."""
    if model.kind is not ErrorKind.STATISTICAL:
        raise ValueError("mc_outage certifies statistical designs only")
    F, e = np.asarray(F), np.asarray(e)
    K, M, N = channels_est.cascaded_est.shape
    outage, half = [], []
    for k in range(K):
        rng = rng_stream(seed, k)
        fails = 0
        for start in range(0, n_samples, batch):
            b = min(batch, n_samples - start)
            h = channels_est.direct_est[k] + crandn(rng, (b, N), model.eps_h_sq[k])
            G = channels_est.cascaded_est[k] + crandn(rng, (b, M, N), model.eps_g_sq[k])
            fails += int(np.sum(_user_rates(F, e, h, G, qos.noise_power[k], k) < qos.target_rate[k]))
        outage.append(fails / n_samples)
        half.append(wilson_halfwidth(fails, n_samples))
    return ValidationReport(outage, [], n_samples, 0, half)


def _project(x, radius):
    n = np.linalg.norm(x.reshape(len(x), -1), axis=1)
    scale = np.where(n > radius, radius / np.maximum(n, 1e-300), 1.0)
    return x * scale.reshape((-1,) + (1,) * (x.ndim - 1))


def _rate_grad(fun, x, step):
    """Central-difference gradient of fun over the real and imaginary parts of x (B, D)."""
    B, D = x.shape
    grad = np.zeros((B, D), complex)
    for part in (1.0, 1j):
        for d in range(D):
            dx = np.zeros(D, complex)
            dx[d] = step * part
            g = (fun(x + dx) - fun(x - dx)) / (2 * step)
            if part == 1.0:
                grad[:, d] += g
            else:
                grad[:, d] += 1j * g
    return grad


def worst_case_rate(F, e, channels_est: EstimatedChannels, model: ErrorModel, qos: QosSpec, n_starts=200,
                    n_steps=50, seed=0, rel_step=1e-6):
    """Minimum rate per user found by projected-gradient search over the error balls.

    Starts are random points on the ball boundaries; each step moves 0.1 xi
    along the normalized negative gradient of the rate in each error block
    and projects back onto its ball.  The result is an upper bound on the true
    worst-case rate.
    """
    if model.kind is not ErrorKind.BOUNDED:
        raise ValueError("worst_case_rate certifies bounded designs only")
    F, e = np.asarray(F), np.asarray(e)
    K, M, N = channels_est.cascaded_est.shape
    worst = []
    for k in range(K):
        h0, G0 = channels_est.direct_est[k], channels_est.cascaded_est[k]
        sig = qos.noise_power[k]
        xi_h, xi_g = float(model.xi_h[k]), float(model.xi_g[k])
        nominal = _user_rates(F, e, h0[None], G0[None], sig, k)[0]
        if xi_h == 0 and xi_g == 0:
            worst.append(float(nominal))
            continue
        blocks = [(xi, size) for xi, size in ((xi_h, N), (xi_g, M * N))]
        offsets = np.cumsum([0] + [s for _, s in blocks])

        def fun(x):
            h = h0 + x[:, :N]
            G = G0 + x[:, N:].reshape(-1, M, N)
            return _user_rates(F, e, h, G, sig, k)

        rng = rng_stream(seed, k)
        x = np.zeros((n_starts, N + M * N), complex)
        for (xi, size), o in zip(blocks, offsets):
            if xi > 0:
                z = crandn(rng, (n_starts, size))
                x[:, o:o + size] = xi * z / np.linalg.norm(z, axis=1, keepdims=True)
        best = min(float(nominal), float(fun(x).min()))
        scale = max(xi_h, xi_g)
        for _ in range(n_steps):
            grad = _rate_grad(fun, x, rel_step * scale)
            for (xi, size), o in zip(blocks, offsets):
                if xi == 0:
                    continue
                g = grad[:, o:o + size]
                gn = np.linalg.norm(g, axis=1, keepdims=True)
                x[:, o:o + size] = _project(x[:, o:o + size] - 0.1 * xi * g / np.maximum(gn, 1e-300), xi)
            best = min(best, float(fun(x).min()))
        worst.append(best)
    return ValidationReport([], worst, 0, n_starts * n_steps, [])


def feasibility_rate(method, dims_grid, delta_grid, qos_rate, n_instances, seed=0, settings=None, rho=0.05):
    """Feasible fraction of the designated AO per (N, M, delta_g, delta_h) grid point."""
    from .beamforming import AoSettings
    from .designs import run_method

    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    settings = settings or AoSettings()
    out = {}
    for N, M, K in dims_grid:
        dims = SystemDims(N, M, K)
        qos = QosSpec.uniform(K, qos_rate, rho=rho)
        for dg, dh in delta_grid:
            ok = 0
            for i in range(n_instances):
                est = generate_scenario(dims, seed=int(seed) * 100_003 + i).as_estimate()
                sol, _ = run_method(method, est, dg, dh, qos, init_seed=i, settings=settings)
                ok += bool(sol.feasible)
            out[(N, M, dg, dh)] = ok / n_instances
    return out
