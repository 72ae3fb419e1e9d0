"""Plot the CSVs written by run_figures.py (requires the `plot` extra).

    python scripts/plot_results.py --indir results --outdir figures
"""

import argparse
import collections
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from irs_robust.experiments import TIMING_COLUMNS, final_rows, read_csv  # noqa: E402


def _mean_dbm(powers_dbm):
    """Average in linear power, reported in dBm."""
    return 10 * np.log10(np.mean(10 ** (np.asarray(powers_dbm) / 10)))


def _feasible(rows):
    return [r for r in rows if r["power_dbm"] != ""]


def plot_convergence(rows, ax):
    traces = collections.defaultdict(lambda: collections.defaultdict(list))
    for r in _feasible(rows):
        traces[r["method"]][int(r["iteration"])].append(float(r["power_dbm"]))
    for method, by_it in sorted(traces.items()):
        its = sorted(by_it)
        ax.plot(its, [_mean_dbm(by_it[i]) for i in its], marker="o", label=method)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("average transmit power (dBm)")


def plot_vs(rows, ax, axis, label):
    curves = collections.defaultdict(lambda: collections.defaultdict(list))
    for r in _feasible(final_rows(rows)):
        key = f"{r['method']} K={r['K']}" if axis == "R" else f"{r['method']} dg={float(r['delta_g']):g}"
        curves[key][float(r[axis])].append(float(r["power_dbm"]))
    for key, pts in sorted(curves.items()):
        xs = sorted(pts)
        ax.plot(xs, [_mean_dbm(pts[x]) for x in xs], marker="o", label=key)
    ax.set_xlabel(label)
    ax.set_ylabel("average transmit power (dBm)")


def plot_timing(path, ax):
    table = read_csv(path, TIMING_COLUMNS)
    by_method = collections.defaultdict(dict)
    for r in table:
        by_method[r["method"]][int(r["N"])] = float(r["mean_iter_ms"]) / 1e3
    for method, pts in sorted(by_method.items()):
        xs = sorted(pts)
        ax.semilogy(xs, [pts[x] for x in xs], marker="o", label=method)
    ax.set_xlabel("N")
    ax.set_ylabel("mean time per iteration (s)")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--indir", default="results")
    p.add_argument("--outdir", default="figures")
    args = p.parse_args()
    indir, outdir = pathlib.Path(args.indir), pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    jobs = {"convergence": lambda rows, ax: plot_convergence(rows, ax),
            "power-vs-rate": lambda rows, ax: plot_vs(rows, ax, "R", "target rate R (bit/s/Hz)"),
            "power-vs-M": lambda rows, ax: plot_vs(rows, ax, "M", "IRS elements M"),
            "power-vs-N": lambda rows, ax: plot_vs(rows, ax, "N", "BS antennas N")}
    for name, fn in jobs.items():
        path = indir / f"{name}.csv"
        if not path.exists():
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        fn(read_csv(path), ax)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(outdir / f"{name}.png", dpi=150)
        plt.close(fig)
    if (indir / "timing.csv").exists():
        fig, ax = plt.subplots(figsize=(6, 4))
        plot_timing(indir / "timing.csv", ax)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(outdir / "timing.png", dpi=150)
        plt.close(fig)


if __name__ == "__main__":
    main()
