"""``simulate`` command line entry point."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from typing import Optional, Sequence

from .harness import (ExperimentConfig, load_config, realization_rng, run_experiment,
                      run_realization, write_outputs)
from .network_model import draw_channels, place_scenario, save_realization

log = logging.getLogger("simulate")

SUBCOMMANDS = ("convergence", "sweep-power", "sweep-qmax", "single-run")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="INI experiment config")
        s.add_argument("--seed", type=int, help="master seed")
        s.add_argument("--out", help="output directory")
        s.add_argument("--workers", type=int, help="worker processes over realizations")
        s.add_argument("--realizations", type=int, help="number of Monte Carlo drops")
        s.add_argument("--power", type=float, action="append",
                       help="transmit power [dBm]; repeat for several")
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any config key")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "single-run":
            s.add_argument("--realization", type=int, default=0, help="realization index")
            s.add_argument("--dump-realization", metavar="PATH",
                           help="also write the drawn channels to PATH")
    return p


def configure(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.set)
    kw = {}
    if args.seed is not None:
        kw["master_seed"] = args.seed
    if args.out is not None:
        kw["out_dir"] = args.out
    if args.workers is not None:
        kw["workers"] = args.workers
    if args.realizations is not None:
        kw["n_realizations"] = args.realizations
    if args.power:
        kw["tx_powers_dbm"] = tuple(args.power)
    if args.command == "convergence":
        kw["record_traces"] = True
        kw["q_max_values"] = None
        if not args.power:
            kw["tx_powers_dbm"] = cfg.tx_powers_dbm[:1]
    elif args.command == "sweep-power":
        kw["q_max_values"] = None
    elif args.command == "sweep-qmax":
        if cfg.q_max_values is None:
            kw["q_max_values"] = tuple(range(1, 9))
        if not args.power:
            kw["tx_powers_dbm"] = (21.0,)
    elif args.command == "single-run":
        kw["record_traces"] = True
        kw["n_realizations"] = 1
        kw["q_max_values"] = None
        if not args.power:
            kw["tx_powers_dbm"] = cfg.tx_powers_dbm[:1]
    return dataclasses.replace(cfg, **kw)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = configure(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"simulate: bad config: {exc}", file=sys.stderr)
        return 2
    if args.command == "single-run" and args.realization:
        result = run_realization(cfg, args.realization)
    else:
        result = run_experiment(cfg, progress=args.verbose)
    if args.command == "single-run" and args.dump_realization:
        rng = realization_rng(cfg.master_seed, args.realization)
        real = draw_channels(place_scenario(cfg.scenario, rng), cfg.scenario, rng,
                             cfg.tx_powers_dbm[0])
        save_realization(real, args.dump_realization)
    try:
        paths = write_outputs(result, cfg.out_dir)
    except SystemExit as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return 1
    failed = sum(1 for r in result.records if r.error)
    if args.command == "single-run":
        for r in result.records:
            print(f"{r.algorithm:9s} {r.qos_domain:5s} {r.tx_power_dbm:6.1f} dBm  "
                  f"discrete {r.weighted_discrete_rate:8.3f}  continuous "
                  f"{r.weighted_continuous_rate:8.3f}  iters {r.iterations_used}"
                  + (f"  ERROR {r.error}" if r.error else ""))
    print(f"wrote {', '.join(str(p) for p in paths.values())}"
          + (f" ({failed} failed cells)" if failed else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
