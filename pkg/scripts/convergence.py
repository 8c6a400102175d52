"""Mean per-iteration rates of the proposed method and WMMSE at one power.

    python scripts/convergence.py --config configs/desk.ini --realizations 20
"""
import argparse
import dataclasses
from collections import defaultdict

import numpy as np

from discrete_precoding.harness import load_config, run_experiment, write_outputs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/desk.ini")
    ap.add_argument("--realizations", type=int, default=20)
    ap.add_argument("--power", type=float, default=21.0)
    ap.add_argument("--out", default="results/convergence")
    args = ap.parse_args()

    cfg = dataclasses.replace(load_config(args.config), n_realizations=args.realizations,
                              tx_powers_dbm=(args.power,), q_max_values=None, record_traces=True,
                              algorithms=("proposed", "wmmse"))
    result = run_experiment(cfg, progress=True)
    write_outputs(result, args.out)

    curves = defaultdict(lambda: defaultdict(list))
    for t in result.traces:
        curves[(t.algorithm, t.qos_domain)][t.iteration].append(
            (t.weighted_discrete_rate, t.weighted_continuous_rate))
    for key, by_it in sorted(curves.items()):
        print(f"\n{key[0]} {key[1]}".rstrip())
        print(" iter   discrete  continuous   runs")
        for it in sorted(by_it):
            # runs that already stopped drop out of later rows
            vals = np.array(by_it[it])
            print(f"{it:5d} {vals[:, 0].mean():10.3f} {vals[:, 1].mean():11.3f} {len(vals):6d}")


if __name__ == "__main__":
    main()
