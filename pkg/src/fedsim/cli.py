"""Command-line entry points: run one experiment, compare metrics files,
or dump a generated population to text."""

import argparse
import sys

from .config import ConfigError, parse_config_file
from .data import save_population
from .harness import (
    build_population,
    compare_experiments,
    emit_csv,
    format_comparison,
    run_experiment,
    write_comparison_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Deterministic federated-averaging experiments on synthetic speaker data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config, write its metrics CSV")
    run.add_argument("--config", required=True, help="experiment config file")
    run.add_argument("--out", required=True, help="metrics CSV to write")
    run.add_argument("--seed", type=int, default=None, help="override the config's seed")
    run.add_argument("--workers", type=int, default=None,
                     help="thread pool size for client updates (same results either way)")

    cmp_ = sub.add_parser("compare", help="summarize metrics CSVs, cheapest first")
    cmp_.add_argument("csvs", nargs="+", help="metrics CSV files")
    cmp_.add_argument("--out", default=None, help="also write the summary as CSV")

    gen = sub.add_parser("gen-data", help="generate a population and dump it as text")
    gen.add_argument("--config", required=True, help="experiment config file")
    gen.add_argument("--out", required=True, help="population text file to write")
    gen.add_argument("--seed", type=int, default=None, help="override the config's seed")

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = parse_config_file(args.config)
            if args.seed is not None:
                config.seed = args.seed
                config.validate()
            rows = run_experiment(config, max_workers=args.workers)
            emit_csv(rows, args.out)
            last = rows[-1]
            print(f"{config.experiment_id}: {last.round} rounds, "
                  f"eval_loss={last.eval_loss:.6g}, cfmq={last.cfmq_terabytes:.6g} TB -> {args.out}")
        elif args.command == "compare":
            summaries = compare_experiments(args.csvs)
            sys.stdout.write(format_comparison(summaries))
            if args.out:
                write_comparison_csv(summaries, args.out)
        elif args.command == "gen-data":
            config = parse_config_file(args.config)
            if args.seed is not None:
                config.seed = args.seed
                config.validate()
            pop = build_population(config)
            save_population(pop, args.out)
            print(f"{pop.num_clients} clients, {pop.total_n} examples -> {args.out}")
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
