"""Run the experiment configs in scripts/configs and write one CSV per figure.

    python scripts/run_figures.py                      # every config
    python scripts/run_figures.py power-vs-M --jobs 4  # selected configs
    python scripts/run_figures.py timing --instances 2 # quick smoke run
"""

import argparse
import logging
import pathlib
import time

from irs_robust.experiments import TIMING_COLUMNS, load_config, run, timing_table, write_csv

CONFIGS = pathlib.Path(__file__).parent / "configs"


def main():
    names = sorted(p.stem for p in CONFIGS.glob("*.json"))
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("figures", nargs="*", help=f"any of {names} (default: all)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--instances", type=int, help="override n_instances")
    p.add_argument("--outdir", default="results")
    args = p.parse_args()
    unknown = set(args.figures) - set(names)
    if unknown:
        p.error(f"unknown figures {sorted(unknown)}")
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.figures or names:
        cfg = load_config(str(CONFIGS / f"{name}.json"))
        if args.instances:
            cfg.n_instances = args.instances
        path = out / f"{name}.csv"
        t0 = time.perf_counter()
        if cfg.figure == "timing":
            rows = run(cfg, out / "timing-rows.csv", args.jobs)
            write_csv(timing_table(rows), path, TIMING_COLUMNS)
        else:
            run(cfg, path, args.jobs)
        logging.info("%s -> %s (%.0f s)", name, path, time.perf_counter() - t0)


if __name__ == "__main__":
    main()
