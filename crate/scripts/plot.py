#!/usr/bin/env python3
"""Plot irsrob sweep/bench CSVs.

    python scripts/plot.py convergence rows.csv out.png
    python scripts/plot.py rate rows.csv out.png
    python scripts/plot.py power-vs-m rows.csv out.png
    python scripts/plot.py feasibility rows.csv out.png
    python scripts/plot.py cpu-time timing.csv out.png
"""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def mean(xs):
    return sum(xs) / len(xs) if xs else float("nan")


def convergence(rows, ax):
    runs = defaultdict(dict)
    for r in rows:
        if r["power_dbm"]:
            runs[(r["method"], r["instance_seed"])][int(r["iteration"])] = float(r["power_dbm"])
    by_method = defaultdict(list)
    for (method, _), trace in runs.items():
        by_method[method].append(trace)
    for method, traces in sorted(by_method.items()):
        last = max(max(t) for t in traces)
        # a finished run holds its final power
        its = range(1, last + 1)
        ys = [mean([t.get(i, t[max(t)]) for t in traces]) for i in its]
        ax.plot(list(its), ys, marker="o", label=method)
    ax.set_xlabel("iteration")
    ax.set_ylabel("average transmit power (dBm)")


def by_axis(rows, axis, ax, group=("method",)):
    pts = defaultdict(list)
    for r in rows:
        if r["power_dbm"]:
            key = tuple(r[g] for g in group)
            pts[key, float(r[axis])].append(float(r["power_dbm"]))
    series = defaultdict(list)
    for (key, x), ys in pts.items():
        series[key].append((x, mean(ys)))
    for key, xy in sorted(series.items()):
        xy.sort()
        ax.plot([p[0] for p in xy], [p[1] for p in xy], marker="o", label=", ".join(key))
    ax.set_ylabel("average transmit power (dBm)")


def rate(rows, ax):
    by_axis(rows, "R", ax, group=("method", "K"))
    ax.set_xlabel("target rate R (bit/s/Hz)")


def power_vs_m(rows, ax):
    irs = [r for r in rows if r["method"] != "no-irs-baseline"]
    by_axis(irs, "M", ax, group=("method", "delta_g"))
    base = [float(r["power_dbm"]) for r in rows if r["method"] == "no-irs-baseline" and r["power_dbm"]]
    if base:
        ax.axhline(mean(base), color="k", linestyle="--", label="no IRS")
    ax.set_xlabel("IRS elements M")


def feasibility(rows, ax):
    counts = defaultdict(lambda: [0, 0])
    for r in rows:
        c = counts[(r["method"], r["delta_g"]), int(r["M"])]
        c[1] += 1
        if r["status"] not in ("infeasible", "error"):
            c[0] += 1
    series = defaultdict(list)
    for (key, m), (ok, n) in counts.items():
        series[key].append((m, ok / n))
    for key, xy in sorted(series.items()):
        xy.sort()
        ax.plot([p[0] for p in xy], [p[1] for p in xy], marker="o", label="%s, delta_g=%s" % key)
    ax.set_xlabel("IRS elements M")
    ax.set_ylabel("feasibility rate")


def cpu_time(rows, ax):
    series = defaultdict(list)
    for r in rows:
        series[r["method"]].append((int(r["M"]), float(r["mean_iter_ms"])))
    for method, xy in sorted(series.items()):
        xy.sort()
        ax.semilogy([p[0] for p in xy], [p[1] for p in xy], marker="o", label=method)
    ax.set_xlabel("IRS elements M")
    ax.set_ylabel("time per iteration (ms)")


KINDS = {
    "convergence": convergence,
    "rate": rate,
    "power-vs-m": power_vs_m,
    "feasibility": feasibility,
    "cpu-time": cpu_time,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("kind", choices=sorted(KINDS))
    ap.add_argument("csv")
    ap.add_argument("out")
    args = ap.parse_args()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    KINDS[args.kind](read(args.csv), ax)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
