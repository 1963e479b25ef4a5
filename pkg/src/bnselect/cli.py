"""Command line entry point: ``bnselect run|summarize|validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiment import (PRESETS, ConfigError, config_from_dict, load_config, read_rows,
                         run_experiment, summarize, _preset_doc)

EXIT_OK, EXIT_USAGE, EXIT_FAILURES = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true")
    p = _Parser(prog="bnselect", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run an experiment", parents=[common])
    run.add_argument("--config", help="experiment config (JSON); layered over --preset if both given")
    run.add_argument("--preset", choices=PRESETS)
    run.add_argument("--out", help="output directory (default: output_dir from the config)")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--repetitions", type=int)
    s = sub.add_parser("summarize", help="recompute the summary of a rows CSV", parents=[common])
    s.add_argument("--rows", required=True)
    v = sub.add_parser("validate", help="check a config file", parents=[common])
    v.add_argument("--config", required=True)
    return p


def _load_run_config(args):
    if not args.config and not args.preset:
        raise ConfigError("run needs --config or --preset")
    doc = _preset_doc(args.preset) if args.preset else {}
    base_dir = "."
    if args.config:
        with open(args.config) as fh:
            try:
                override = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed config file: {exc}") from None
        doc.update(override)
        base_dir = Path(args.config).parent
    for key in ("seed", "workers", "repetitions"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
    return config_from_dict(doc, base_dir)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        if args.command == "validate":
            config = load_config(args.config)
            print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "summarize":
            print(json.dumps(summarize(read_rows(args.rows)), indent=2, sort_keys=True))
            return EXIT_OK
        config = _load_run_config(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"bnselect: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = run_experiment(config, out_dir=args.out or config.output_dir, workers=config.workers)
    print(json.dumps(report.summary, indent=2, sort_keys=True))
    if report.excessive_failures:
        print(f"bnselect: {len(report.failures)} of {len(report.repetitions)} repetitions failed",
              file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
