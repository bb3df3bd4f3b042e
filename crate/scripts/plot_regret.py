#!/usr/bin/env python3
"""Plot a bench sweep: mean regret vs horizon, log-log, one line per algorithm.

Usage: scripts/plot_regret.py <out-dir-from-bench> [plot.png]

Reads summary.csv and slopes.csv as written by `regime-bandits bench` and
renders the slope-separation figure. Requires matplotlib.
"""

import csv
import sys
from collections import defaultdict


def main() -> int:
    if len(sys.argv) < 2:
        print(__doc__)
        return 2
    out_dir = sys.argv[1].rstrip("/")
    target = sys.argv[2] if len(sys.argv) > 2 else f"{out_dir}/regret.png"

    series = defaultdict(list)
    with open(f"{out_dir}/summary.csv") as fh:
        for row in csv.DictReader(fh):
            series[row["algo"]].append(
                (int(row["T"]), float(row["mean_regret"]), float(row["stderr"]))
            )

    slopes = {}
    try:
        with open(f"{out_dir}/slopes.csv") as fh:
            for row in csv.DictReader(fh):
                if row["slope"]:
                    slopes[row["algo"]] = float(row["slope"])
    except FileNotFoundError:
        pass

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    for algo, points in sorted(series.items()):
        points.sort()
        ts = [p[0] for p in points]
        means = [p[1] for p in points]
        errs = [p[2] for p in points]
        label = algo
        if algo in slopes:
            label += f" (slope {slopes[algo]:.2f})"
        ax.errorbar(ts, means, yerr=errs, marker="o", capsize=3, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("horizon T")
    ax.set_ylabel("mean regret")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(target, dpi=150)
    print(f"wrote {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
