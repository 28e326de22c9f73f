"""Command-line entry point: ``dcopde {oracle,run,report,stats,feasratio}``.

Every config key can be set in a ``key = value`` file passed with
``--config`` and overridden by a flag of the same name (``--runs 5``,
``--instances G24_1,G24_5``).  ``DCOPDE_OUT`` sets the output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from dcopde import harness
from dcopde.g24 import DYNAMIC_IDS, TABLE, feasible_region_ratio


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("-v", "--verbose", action="store_true")
    for f in dataclasses.fields(harness.ExperimentConfig):
        if f.name == "resume":
            common.add_argument("--resume", action="store_const", const="true",
                                help="skip runs already present in a store with the same config")
        else:
            common.add_argument(f"--{f.name}", metavar="VALUE", help=f"(default: {_show(f.default)})")

    p = argparse.ArgumentParser(prog="dcopde", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("oracle", parents=[common], help="compute reference optima for every cell")
    sub.add_parser("run", parents=[common], help="execute the experiment grid")
    sub.add_parser("report", parents=[common], help="write tables and exports from a store")
    sub.add_parser("stats", parents=[common], help="print the dominance matrix")
    fr = sub.add_parser("feasratio", parents=[common], help="Monte Carlo feasible-region ratios")
    fr.add_argument("--samples", type=int, default=10**6)
    return p


def _show(v):
    return ",".join(map(str, v)) if isinstance(v, tuple) else v


def config_from_args(args) -> harness.ExperimentConfig:
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(harness.ExperimentConfig)}
    return harness.load_config(args.config, overrides)


def feasratio_table(config: harness.ExperimentConfig, samples: int) -> str:
    lines = ["instance\tS\tt_range\tmin_pct\tmax_pct\texpected_pct"]
    for inst, sev in harness.cells(config):
        times = range(config.T + 1) if inst in DYNAMIC_IDS else (0,)
        pct = [100 * feasible_region_ratio(inst, sev, t, n_samples=samples, seed=config.seed, k=config.k)
               for t in times]
        lo, hi = TABLE[inst].feasible_pct
        expected = f"{lo:g}" if lo == hi else f"{lo:g}-{hi:g}"
        lines.append(f"{inst}\t{sev}\t{times[0]}-{times[-1]}\t{min(pct):.2f}\t{max(pct):.2f}\t{expected}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        config = config_from_args(args)
        store = harness.ResultStore(config.out)
        if args.command == "oracle":
            harness.ensure_optima(config, store, force=not config.resume)
            print(f"optima written to {store.root / 'optima'}")
        elif args.command == "run":
            harness.run_experiment(config)
            print(f"traces written to {store.root / 'traces'}")
        elif args.command == "report":
            for path in harness.make_report(config, store).values():
                print(path)
        elif args.command == "stats":
            results = [c for c in harness.collect(config, store) if c.complete]
            rows = harness.comparisons(results, config.strategies)
            sys.stdout.write(harness.stats.dominance_matrix(rows, config.strategies))
        elif args.command == "feasratio":
            sys.stdout.write(feasratio_table(config, args.samples))
    except (harness.ConfigError, ValueError) as exc:
        print(f"dcopde: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
