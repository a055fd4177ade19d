"""Command-line entry point: ``fasflux <experiment> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import KINDS, ConfigError, ConfigIssue, parse_config
from .report import ReportError, report
from .runner import run

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def build_parser():
    parser = argparse.ArgumentParser(prog="fasflux",
                                     description="Flux-across-surfaces experiments for free packets.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None, help="overrides ensemble.seed")
    p = sub.add_parser("report", help="convergence tables from experiment CSVs")
    p.add_argument("csv", nargs="+", type=Path)
    return parser


def _fail(code, kind, message, out_dir=None, issues=()):
    doc = {"status": "error", "error": kind, "message": message,
           "issues": [{"path": i.path, "message": i.message} for i in issues]}
    text = json.dumps(doc, indent=2)
    print(text, file=sys.stderr)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(text + "\n", encoding="utf-8")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "report":
        try:
            sys.stdout.write(report(args.csv))
        except (ReportError, OSError) as exc:
            return _fail(EXIT_RUNTIME, type(exc).__name__, str(exc))
        return EXIT_OK

    if args.workers < 1:
        return _fail(EXIT_CONFIG, "ConfigError", "--workers must be >= 1", args.out)
    try:
        text = args.config.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        return _fail(EXIT_CONFIG, type(exc).__name__, str(exc), args.out)
    try:
        cfg = parse_config(text, experiment=args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError([ConfigIssue("--seed", "must be >= 0")])
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "ConfigError", str(exc), args.out, exc.issues)
    try:
        result = run(cfg, args.out, args.workers)
    except Exception as exc:  # module errors become a machine-readable report
        return _fail(EXIT_RUNTIME, type(exc).__name__, f"{args.command}: {exc}", args.out)
    print(f"wrote {result.csv_path} and {result.json_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
