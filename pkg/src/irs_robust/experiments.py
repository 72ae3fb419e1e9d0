"""Batch experiments: configuration, instance grid, CSV output, timing.

A config is one JSON document.  Every field has a default, so
``{"figure": "convergence"}`` is a complete config.  The task grid is the
product of methods, user counts, rates, error levels, sweep values and
instances, visited in that fixed order; results are written in grid order
regardless of ``jobs``.
"""

from __future__ import annotations

import csv
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .beamforming import AoSettings
from .channel_model import Geometry, QosSpec, SystemDims, generate_scenario
from .designs import METHODS, run_method

CSV_COLUMNS = ["method", "N", "M", "K", "R", "delta_g", "delta_h", "instance_seed", "iteration", "power_dbm",
               "status", "wall_time_ms"]
TIMING_COLUMNS = ["method", "N", "M", "K", "n_instances", "mean_iter_ms", "bounded_over_stat"]
SWEEP_AXES = ("none", "N", "M")
FIGURES = ("custom", "convergence", "power-vs-rate", "power-vs-M", "power-vs-N", "timing")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    figure: str = "custom"
    methods: list = field(default_factory=lambda: ["pcu-bounded", "fcu-bounded", "pcu-stat", "fcu-stat"])
    N: int = 6
    M: int = 6
    K: list = field(default_factory=lambda: [3])
    rates: list = field(default_factory=lambda: [1.0])
    deltas: list = field(default_factory=lambda: [[0.01, 0.02]])  # (delta_g, delta_h) pairs
    sweep_axis: str = "none"
    sweep_values: list = field(default_factory=list)
    n_instances: int = 20
    seed: int = 0
    noise_dbm: float = -80.0
    rho: float = 0.05
    tol: float = 1e-4
    max_iter: int = 30
    geometry: dict = field(default_factory=dict)
    post_filter: bool = False  # keep only instances feasible at the largest sweep value
    output: str = "results.csv"

    def validate(self):
        if self.figure not in FIGURES:
            raise ConfigError(f"unknown figure {self.figure!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {bad}")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep_axis must be one of {SWEEP_AXES}")
        if self.sweep_axis != "none" and not self.sweep_values:
            raise ConfigError("sweep_values required with a sweep axis")
        if self.n_instances < 1 or self.max_iter < 1 or self.tol <= 0:
            raise ConfigError("n_instances, max_iter and tol must be positive")
        if not 0 < self.rho < 1:
            raise ConfigError("rho must lie in (0, 1)")
        if any(len(d) != 2 or not (0 <= d[0] < 1 and 0 <= d[1] < 1) for d in self.deltas):
            raise ConfigError("deltas must be [delta_g, delta_h] pairs in [0, 1)")
        if any(r <= 0 for r in self.rates) or any(k < 1 for k in self.K):
            raise ConfigError("rates and K must be positive")
        try:
            Geometry(**self.geometry)
        except TypeError as exc:
            raise ConfigError(f"bad geometry: {exc}") from exc
        return self

    def settings(self):
        return AoSettings(tol=self.tol, max_iter=self.max_iter)


FIGURE_DEFAULTS = {
    "convergence": dict(methods=["pcu-bounded", "fcu-bounded", "pcu-stat", "fcu-stat"], N=6, M=6, K=[3],
                        rates=[1.0], deltas=[[0.01, 0.02]]),
    "power-vs-rate": dict(methods=["pcu-bounded", "fcu-bounded", "pcu-stat", "fcu-stat"], N=6, M=6, K=[2, 3],
                          rates=[1.0, 2.0, 3.0, 4.0], deltas=[[0.01, 0.02]]),
    "power-vs-M": dict(methods=["pcu-stat", "no-irs-baseline"], N=6, K=[2], rates=[2.0],
                       deltas=[[0.0, 0.0], [0.05, 0.0], [0.08, 0.0], [0.12, 0.0]], sweep_axis="M",
                       sweep_values=[4, 6, 8, 10], post_filter=True),
    "power-vs-N": dict(methods=["pcu-stat", "no-irs-baseline"], M=6, K=[2], rates=[2.0],
                       deltas=[[0.0, 0.0], [0.05, 0.0], [0.12, 0.0]], sweep_axis="N",
                       sweep_values=[4, 6, 8, 10], post_filter=True),
    "timing": dict(methods=["pcu-bounded", "fcu-bounded", "pcu-stat", "fcu-stat"], M=6, K=[2], rates=[1.0],
                   deltas=[[0.01, 0.02]], sweep_axis="N", sweep_values=[4, 6, 8], n_instances=5),
}


def load_config(source) -> ExperimentConfig:
    """Config from a dict, a JSON string or a path.  Raises ConfigError or OSError."""
    if isinstance(source, dict):
        doc = dict(source)
    else:
        text = source
        if not str(source).lstrip().startswith("{"):
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    base = FIGURE_DEFAULTS.get(doc.get("figure", "custom"), {})
    try:
        cfg = ExperimentConfig(**{**base, **doc})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if isinstance(cfg.K, int):
        cfg.K = [cfg.K]
    return cfg.validate()


@dataclass(frozen=True)
class Task:
    method: str
    N: int
    M: int
    K: int
    R: float
    delta_g: float
    delta_h: float
    instance_seed: int
    grid_value: int = 0


def instance_seed(base_seed, index):
    return int(base_seed) * 1_000_003 + int(index)


def tasks(cfg: ExperimentConfig):
    values = cfg.sweep_values if cfg.sweep_axis != "none" else [None]
    out = []
    for method, K, R, (dg, dh), v, i in itertools.product(cfg.methods, cfg.K, cfg.rates, cfg.deltas, values,
                                                          range(cfg.n_instances)):
        N = v if cfg.sweep_axis == "N" else cfg.N
        M = v if cfg.sweep_axis == "M" else cfg.M
        out.append(Task(method, int(N), int(M), int(K), float(R), float(dg), float(dh),
                        instance_seed(cfg.seed, i), v or 0))
    return out


def run_task(task: Task, cfg: ExperimentConfig):
    """Solve one grid point; failures are recorded in the rows, never raised."""
    geom = Geometry(**cfg.geometry)
    t0 = time.perf_counter()
    try:
        est = generate_scenario(SystemDims(task.N, task.M, task.K), geom, task.instance_seed).as_estimate()
        qos = QosSpec.uniform(task.K, task.R, cfg.noise_dbm, cfg.rho)
        sol, trace = run_method(task.method, est, task.delta_g, task.delta_h, qos, task.instance_seed,
                                cfg.settings())
    except Exception as exc:  # noqa: BLE001 - recorded in-row by contract
        return [_row(task, 0, np.nan, f"error:{type(exc).__name__}", (time.perf_counter() - t0) * 1e3)]
    if not sol.feasible:
        return [_row(task, 0, np.nan, "infeasible", sum(trace.iter_times) * 1e3)]
    rows = []
    last = len(trace.power_trace) - 1
    for it, (p, dt) in enumerate(zip(trace.power_trace, trace.iter_times)):
        status = trace.stop_reason if it == last else "iterate"
        rows.append(_row(task, it, 10 * np.log10(p), status, dt * 1e3))
    return rows


def _row(task, iteration, power_dbm, status, wall_ms):
    return {"method": task.method, "N": task.N, "M": task.M, "K": task.K, "R": task.R, "delta_g": task.delta_g,
            "delta_h": task.delta_h, "instance_seed": task.instance_seed, "iteration": iteration,
            "power_dbm": "" if not np.isfinite(power_dbm) else f"{power_dbm:.10g}", "status": status,
            "wall_time_ms": f"{wall_ms:.3f}"}


def _run_pair(args):
    return run_task(*args)


def execute(cfg: ExperimentConfig, jobs=1, progress=None):
    """Run the whole grid; returns the rows in grid order."""
    todo = tasks(cfg)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_pair, [(t, cfg) for t in todo]))
    else:
        results = []
        for t in todo:
            results.append(run_task(t, cfg))
            if progress:
                progress(t, results[-1])
    rows = [r for res in results for r in res]
    return apply_post_filter(rows, cfg) if cfg.post_filter else rows


def final_rows(rows):
    """Last row of each (method, grid point, instance)."""
    last = {}
    for r in rows:
        key = tuple(r[c] for c in CSV_COLUMNS[:8])
        last[key] = r
    return list(last.values())


def apply_post_filter(rows, cfg: ExperimentConfig):
    """Drop instances that are infeasible at the largest sweep value of their curve."""
    if cfg.sweep_axis == "none":
        return rows
    top = max(cfg.sweep_values)
    keep = set()
    for r in final_rows(rows):
        if int(r[cfg.sweep_axis]) == top and r["status"] not in ("infeasible",) and \
                not str(r["status"]).startswith("error"):
            keep.add((r["method"], r["K"], r["R"], r["delta_g"], r["delta_h"], r["instance_seed"]))
    return [r for r in rows if (r["method"], r["K"], r["R"], r["delta_g"], r["delta_h"], r["instance_seed"]) in keep]


def write_csv(rows, path, columns=CSV_COLUMNS):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\r\n")
        w.writeheader()
        w.writerows(rows)


def read_csv(path, columns=CSV_COLUMNS):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != columns:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return list(reader)


def validate_row(row):
    """Check one row against the published schema."""
    if set(row) != set(CSV_COLUMNS):
        return False
    try:
        int(row["N"]), int(row["M"]), int(row["K"]), int(row["instance_seed"]), int(row["iteration"])
        float(row["R"]), float(row["delta_g"]), float(row["delta_h"]), float(row["wall_time_ms"])
        if row["power_dbm"] != "":
            float(row["power_dbm"])
    except (TypeError, ValueError):
        return False
    return row["method"] in METHODS and bool(row["status"])


def run(cfg: ExperimentConfig, out=None, jobs=1, progress=None):
    rows = execute(cfg, jobs, progress)
    write_csv(rows, out or cfg.output)
    return rows


def timing_table(rows):
    """Mean per-iteration wall time per (method, N, M, K) and the bounded/statistical ratio."""
    acc = {}
    for r in rows:
        if r["power_dbm"] == "":
            continue
        key = (r["method"], int(r["N"]), int(r["M"]), int(r["K"]))
        acc.setdefault(key, {"t": [], "inst": set()})
        acc[key]["t"].append(float(r["wall_time_ms"]))
        acc[key]["inst"].add(r["instance_seed"])
    means = {k: float(np.mean(v["t"])) for k, v in acc.items()}
    out = []
    for (method, N, M, K), mean in means.items():
        ratio = ""
        if method.endswith("bounded"):
            stat = means.get((method.replace("bounded", "stat"), N, M, K))
            ratio = f"{mean / stat:.6g}" if stat else ""
        out.append({"method": method, "N": N, "M": M, "K": K, "n_instances": len(acc[(method, N, M, K)]["inst"]),
                    "mean_iter_ms": f"{mean:.6g}", "bounded_over_stat": ratio})
    return out


def bench(cfg: ExperimentConfig, out=None, jobs=1, progress=None):
    rows = execute(replace(cfg, post_filter=False), jobs, progress)
    table = timing_table(rows)
    write_csv(table, out or cfg.output, TIMING_COLUMNS)
    return table


def complexity_estimate(method, N, M, K):
    """Per-iteration interior-point cost order o_F + o_e of each design.

    The expressions are evaluated exactly as published, including their
    known irregularities (see the project notes).
    """
    if min(N, M, K) < 1:
        raise ValueError("dimensions must be positive")
    n1, n2 = N * K, M
    MN = M * N
    o_e_bounded = (K * (MN + 1 + K) + 2 * M) ** 0.5 * n2 * (
        n2 ** 2 + n2 * K * ((MN + 1) ** 2 + K ** 2) + K * ((MN + 1) ** 3 + K ** 3) + n2 * M)
    if method == "pcu-bounded":
        o_f = (K * (MN + K + N + 1)) ** 0.5 * n1 * (
            n1 ** 2 + n1 * K * ((MN + 1) ** 2 + (K + N) ** 2) + K * ((MN + 1) ** 3 + (K + N) ** 3))
        return o_f + o_e_bounded
    if method == "fcu-bounded":
        o_f = (K * (MN + 3 * N + K + 1)) ** 0.5 * n1 * (
            n1 ** 2 + n1 * K * ((MN + N + 1) ** 2 + (K + 2 * N) ** 2) + K * ((MN + N + 1) ** 3 + (K + 2 * N) ** 2))
        return o_f + o_e_bounded
    if method in ("pcu-stat", "fcu-stat"):
        o_f = (2 * K * (N + 1)) ** 0.5 * n1 * (
            n1 ** 2 + 2 * n1 * K * N ** 2 + 2 * K * N ** 3 + n1 * K * N ** 2 * (N + 1) ** 2)
        o_e = (4 * K + 2 * M) ** 0.5 * n2 * (n2 ** 2 + n2 * (K * (M ** 2 + (N + 1) ** 2) + M))
        return o_f + o_e
    raise ValueError(f"no complexity formula for method {method!r}")


def config_to_json(cfg: ExperimentConfig):
    return json.dumps(asdict(cfg), indent=2)
