"""Mean weighted sum rates versus transmit power for every algorithm.

    python scripts/power_sweep.py --config configs/desk.ini --realizations 100 --workers 4
"""
import argparse
import dataclasses

from discrete_precoding.harness import load_config, plot_rows, run_experiment, write_outputs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/desk.ini")
    ap.add_argument("--realizations", type=int, default=100)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--domains", default="rate", help="comma list of mse, rate, sinr")
    ap.add_argument("--out", default="results/power_sweep")
    args = ap.parse_args()

    cfg = load_config(args.config, [f"algorithm.proposed.domains={args.domains}"])
    cfg = dataclasses.replace(cfg, n_realizations=args.realizations, workers=args.workers,
                              q_max_values=None)
    result = run_experiment(cfg, progress=True)
    write_outputs(result, args.out)
    print(f"{'algorithm':9s} {'domain':6s} {'P[dBm]':>7s} {'discrete':>16s} {'continuous':>16s}")
    for alg, dom, p, _, n, md, sd, mc, sc in plot_rows(result.records):
        print(f"{alg:9s} {dom:6s} {p:7.1f} {md:9.3f} ±{sd:5.2f} {mc:9.3f} ±{sc:5.2f}")


if __name__ == "__main__":
    main()
