"""Command-line entry point: generate, solve, validate, sweep, bench."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .beamforming import AoSettings
from .channel_model import (EstimatedChannels, QosSpec, SystemDims, TrueChannels, channels_from_json,
                            channels_to_json, generate_scenario)
from .designs import METHODS, error_model, method_parts, run_method
from .experiments import ConfigError, bench, load_config, run

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INFEASIBLE = 0, 2, 3, 4
SOLUTION_SCHEMA = "irs-robust/solution/v1"
log = logging.getLogger("irs_robust")


def _cplx(a):
    a = np.asarray(a)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _uncplx(v):
    a = np.asarray(v, float)
    if a.size == 0:
        return np.zeros(0, complex)
    return a[..., 0] + 1j * a[..., 1]


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _estimate(ch):
    return ch.as_estimate() if isinstance(ch, TrueChannels) else ch


def cmd_generate(args):
    ch = generate_scenario(SystemDims(args.N, args.M, args.K), seed=args.seed)
    _write(args.out, channels_to_json(ch))
    return EXIT_OK


def _load_channels(args):
    if args.channels:
        return _estimate(channels_from_json(_read(args.channels)))
    return generate_scenario(SystemDims(args.N, args.M, args.K), seed=args.seed).as_estimate()


def cmd_solve(args):
    est = _load_channels(args)
    K = est.direct_est.shape[0]
    qos = QosSpec.uniform(K, args.rate, args.noise_dbm, args.rho)
    sol, trace = run_method(args.method, est, args.delta_g, args.delta_h, qos, args.seed,
                            AoSettings(tol=args.tol, max_iter=args.max_iter))
    doc = {"schema": SOLUTION_SCHEMA, "method": args.method, "rate": args.rate, "delta_g": args.delta_g,
           "delta_h": args.delta_h, "rho": args.rho, "noise_dbm": args.noise_dbm, "feasible": sol.feasible,
           "power_dbm": sol.power_dbm if sol.feasible else None, "F": _cplx(sol.F), "e": _cplx(sol.e),
           "power_trace_dbm": [float(10 * np.log10(p)) for p in trace.power_trace],
           "stop_reason": trace.stop_reason, "iterations": trace.iterations}
    _write(args.out, json.dumps(doc))
    log.info("%s: %s", args.method, f"{sol.power_dbm:.3f} dBm" if sol.feasible else "infeasible")
    return EXIT_OK if sol.feasible else EXIT_INFEASIBLE


def cmd_validate(args):
    from .validation import mc_outage, worst_case_rate

    doc = json.loads(_read(args.solution))
    if doc.get("schema") != SOLUTION_SCHEMA:
        raise ConfigError("not a solution document")
    if not doc["feasible"]:
        return EXIT_INFEASIBLE
    est = _estimate(channels_from_json(_read(args.channels)))
    if doc["method"] == "no-irs-baseline":
        K, _, N = est.cascaded_est.shape
        est = EstimatedChannels(est.direct_est, np.zeros((K, 0, N), complex))
    K = est.direct_est.shape[0]
    qos = QosSpec.uniform(K, doc["rate"], doc["noise_dbm"], doc["rho"])
    model = error_model(doc["method"], est, doc["delta_g"], doc["delta_h"], doc["rho"])
    F, e = _uncplx(doc["F"]), _uncplx(doc["e"]).reshape(-1)
    _, kind = method_parts(doc["method"])
    if kind.value == "bounded":
        report = worst_case_rate(F, e, est, model, qos, args.starts, args.steps, args.seed)
    else:
        report = mc_outage(F, e, est, model, qos, args.samples, args.seed)
    _write(args.out, report.to_csv() if args.format == "csv" else report.to_json())
    return EXIT_OK


def _check_writable(path):
    with open(path, "a", encoding="utf-8"):
        pass


def _progress(task, rows):
    log.info("%s N=%d M=%d K=%d R=%g seed=%d: %s", task.method, task.N, task.M, task.K, task.R,
             task.instance_seed, rows[-1]["status"])


def cmd_sweep(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    _check_writable(args.out or cfg.output)
    rows = run(cfg, args.out, args.jobs, _progress)
    feasible = [r for r in rows if r["power_dbm"] != ""]
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def cmd_bench(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    _check_writable(args.out or cfg.output)
    table = bench(cfg, args.out, args.jobs, _progress)
    return EXIT_OK if table else EXIT_INFEASIBLE


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--out", default=None, help="output path (default: stdout or config value)")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="irs-robust", description="Robust beamforming for IRS-aided downlinks.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="draw a channel instance")
    for name, default in (("N", 6), ("M", 6), ("K", 3)):
        g.add_argument(f"-{name}", type=int, default=default)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", parents=[common], help="run one design")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--channels", help="channel JSON from `generate` (otherwise drawn from --seed)")
    for name, default in (("N", 6), ("M", 6), ("K", 3)):
        s.add_argument(f"-{name}", type=int, default=default)
    s.add_argument("--rate", type=float, default=1.0)
    s.add_argument("--delta-g", type=float, default=0.01)
    s.add_argument("--delta-h", type=float, default=0.02)
    s.add_argument("--rho", type=float, default=0.05)
    s.add_argument("--noise-dbm", type=float, default=-80.0)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-iter", type=int, default=30)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", parents=[common], help="certify a solution empirically")
    v.add_argument("--solution", required=True)
    v.add_argument("--channels", required=True)
    v.add_argument("--samples", type=int, default=10_000)
    v.add_argument("--starts", type=int, default=200)
    v.add_argument("--steps", type=int, default=50)
    v.add_argument("--format", choices=("json", "csv"), default="json")
    v.set_defaults(func=cmd_validate)

    w = sub.add_parser("sweep", parents=[common], help="run an experiment config to CSV")
    w.add_argument("config", help="JSON config path or inline JSON")
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", parents=[common], help="per-iteration timing table")
    b.add_argument("config", help="JSON config path or inline JSON")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command in ("generate", "solve", "validate") and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except (ConfigError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
