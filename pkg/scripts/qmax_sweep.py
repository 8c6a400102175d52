"""Mean weighted discrete sum rate versus the size of the rate grid {0, ..., q_max}.

    python scripts/qmax_sweep.py --config configs/desk.ini --realizations 100
"""
import argparse
import dataclasses

from discrete_precoding.harness import load_config, plot_rows, run_experiment, write_outputs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/desk.ini")
    ap.add_argument("--realizations", type=int, default=100)
    ap.add_argument("--power", type=float, default=21.0)
    ap.add_argument("--q-max", type=int, default=8)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/qmax_sweep")
    args = ap.parse_args()

    cfg = dataclasses.replace(load_config(args.config), n_realizations=args.realizations,
                              tx_powers_dbm=(args.power,), workers=args.workers,
                              q_max_values=tuple(range(1, args.q_max + 1)))
    result = run_experiment(cfg, progress=True)
    write_outputs(result, args.out)
    for alg, dom, _, q, n, md, sd, mc, sc in plot_rows(result.records):
        print(f"{alg:9s} {dom:5s} q_max={q:2d}  discrete {md:8.3f} ±{sd:5.2f}")


if __name__ == "__main__":
    main()
