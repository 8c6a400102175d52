"""Draw PNG figures from a results directory (needs matplotlib).

    python scripts/plot.py results/power_sweep
"""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def plot_dir(out: Path):
    rows = _read(out / "plotdata.csv")
    swept = "q_max" if any(r["q_max"] for r in rows) else "tx_power_dbm"
    series = defaultdict(list)
    for r in rows:
        series[(r["algorithm"], r["qos_domain"])].append(
            (float(r[swept]), float(r["mean_discrete_rate"]), float(r["sem_discrete_rate"]),
             float(r["mean_continuous_rate"])))
    if len({x for pts in series.values() for x, *_ in pts}) > 1:
        fig, ax = plt.subplots(figsize=(6, 4))
        for (alg, dom), pts in sorted(series.items()):
            pts.sort()
            x, y, s, _ = zip(*pts)
            ax.errorbar(x, y, yerr=s, marker="o", ms=3, capsize=2,
                        label=f"{alg} {dom}".strip())
        ax.set_xlabel("q_max" if swept == "q_max" else "transmit power [dBm]")
        ax.set_ylabel("weighted discrete sum rate [bits/s/Hz]")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out / "sweep.png", dpi=150)

    trace = _read(out / "trace.csv")
    if trace:
        curves = defaultdict(lambda: defaultdict(list))
        for t in trace:
            key = f"{t['algorithm']} {t['qos_domain']}".strip()
            curves[key][int(t["iteration"])].append(
                (float(t["weighted_discrete_rate"]), float(t["weighted_continuous_rate"])))
        fig, ax = plt.subplots(figsize=(6, 4))
        for key, by_it in sorted(curves.items()):
            its = sorted(by_it)
            disc = [sum(v[0] for v in by_it[i]) / len(by_it[i]) for i in its]
            cont = [sum(v[1] for v in by_it[i]) / len(by_it[i]) for i in its]
            line, = ax.plot(its, disc, label=f"{key} discrete")
            ax.plot(its, cont, ls="--", color=line.get_color(), label=f"{key} continuous")
        ax.set_xlabel("iteration")
        ax.set_ylabel("weighted sum rate [bits/s/Hz]")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out / "trace.png", dpi=150)


if __name__ == "__main__":
    for arg in sys.argv[1:] or ["results"]:
        plot_dir(Path(arg))
