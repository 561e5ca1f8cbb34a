"""Command-line entry point: ``quditbell run|report|level-diagram|fit-decay``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_config, parse_config
from .experiments import run
from .fitting import DecayFitError, fit_decay, read_decay_csv
from .report import ResultIntegrityError, report


def _cmd_run(args) -> int:
    cfg = load_config(args.config).with_overrides(
        workers=args.workers, seed=args.seed, output_dir=args.output_dir, mode=args.mode
    )
    result = run(cfg)
    print(result.csv_text(), end="")
    return 0


def _cmd_report(args) -> int:
    text = report(args.results, table=args.table, expected_hash=args.expect_hash)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def _cmd_level_diagram(args) -> int:
    raw = {
        "experiment": "level-diagram",
        "system": args.system,
        "field_range_T": [args.min_field, args.max_field],
        "field_points": args.points,
        "output": {"directory": args.output_dir, "name": f"level_diagram_{args.system}"},
    }
    result = run(parse_config(raw))
    print(f"wrote {result.config.output.directory}/{result.config.name}.csv ({len(result.rows)} field points)")
    return 0


def _cmd_fit_decay(args) -> int:
    tau, amp = read_decay_csv(args.csv)
    fit = fit_decay(tau, amp)
    print(json.dumps(fit.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quditbell", description="Bell-test simulations on molecular spin qudits.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, help="worker processes for sweep cells")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--output-dir", help="override the output directory")
    r.add_argument("--mode", choices=("rotating-wave", "lab"), help="override the propagation mode")
    r.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="compare result files with the published tables")
    rep.add_argument("results", nargs="+", help="result JSON (or CSV) files")
    rep.add_argument("--table", help="reference table key (default by experiment)")
    rep.add_argument("--expect-hash", help="refuse results whose config hash differs")
    rep.add_argument("-o", "--output", help="write the markdown report here")
    rep.set_defaults(func=_cmd_report)

    ld = sub.add_parser("level-diagram", help="spectrum versus static field")
    ld.add_argument("--system", choices=("dimer", "trimer"), default="dimer")
    ld.add_argument("--min-field", type=float, default=0.0, help="tesla")
    ld.add_argument("--max-field", type=float, default=1.5, help="tesla")
    ld.add_argument("--points", type=int, default=301)
    ld.add_argument("--output-dir", default="results")
    ld.set_defaults(func=_cmd_level_diagram)

    fd = sub.add_parser("fit-decay", help="fit M0 exp(-2 tau / T2) to a CSV with tau_us, amplitude")
    fd.add_argument("csv")
    fd.set_defaults(func=_cmd_fit_decay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DecayFitError, ResultIntegrityError, KeyError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
