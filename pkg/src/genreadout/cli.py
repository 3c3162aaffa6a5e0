"""Command line entry point: ``genreadout {run,compare,gradcheck,limits}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import checks
from .harness import ConfigError, ExperimentConfig, atomic_write, compare_presets, run_experiment

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _report(reports, verbose):
    ok = True
    for r in reports:
        print(r.line())
        if not r.passed:
            ok = False
            for f in r.failures[: None if verbose else 5]:
                print(f"    {f}")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_run(args):
    config = ExperimentConfig.load(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    summary = run_experiment(config, workers=args.workers)
    print(summary.table_text(), end="")
    print(f"results written to {config.output_dir}")
    aborted = sum(1 for r in summary.rows if r.status != "ok")
    if aborted:
        print(f"{aborted} run(s) aborted", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_compare(args):
    try:
        _, csv_text, text = compare_presets(args.summaries)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(out.with_suffix(".csv"), csv_text)
        atomic_write(out.with_suffix(".txt"), text)
    return EXIT_OK


def cmd_gradcheck(args):
    return _report(checks.gradient_suite(args.configs, args.seed, args.h), args.verbose)


def cmd_limits(args):
    return _report(checks.limit_suite(args.batches, args.seed), args.verbose)


def build_parser():
    parser = argparse.ArgumentParser(prog="genreadout", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every configured readout num_runs times")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--workers", type=int, default=None, help="parallel runs (default: config value)")
    p.add_argument("--output-dir", default=None, help="override output_dir from the config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="rank presets across summary CSVs")
    p.add_argument("summaries", nargs="+")
    p.add_argument("--out", default=None, help="write <out>.csv and <out>.txt")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="analytic readout gradients vs finite differences")
    p.add_argument("--configs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-6)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("limits", help="special (beta, p) settings vs classic readouts")
    p.add_argument("--batches", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_limits)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
