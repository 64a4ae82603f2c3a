"""Command line entry point.

Subcommands::

    alphamix run CONFIG.toml --out DIR [--seed S] [--trials T] [--threads K] [--set key=value ...]
    alphamix sweep CONFIG.toml --out DIR [--eta ...] [--gamma ...] [--J ...]
    alphamix eval DIR
    alphamix targets list

Exit status is 0 on success, 2 for configuration errors and 3 when a run
hits an unrecoverable numerical degeneracy.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, NumericalDegeneracyError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(args):
    out = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = _parse_value(value.strip())
    for key in ("seed", "trials", "threads"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="alphamix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="TOML experiment configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--trials", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (value parsed as JSON when possible)")

    common(sub.add_parser("run", help="run one configuration"))
    p_sweep = sub.add_parser("sweep", help="cartesian sweep over eta, gamma and J")
    common(p_sweep)
    p_sweep.add_argument("--eta", type=float, nargs="+")
    p_sweep.add_argument("--gamma", type=float, nargs="+")
    p_sweep.add_argument("--J", type=int, nargs="+")
    p_eval = sub.add_parser("eval", help="recompute metrics from a run directory")
    p_eval.add_argument("run_dir")
    p_targets = sub.add_parser("targets", help="inspect built-in targets")
    p_targets.add_argument("action", choices=["list"])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from . import harness
    from .targets import BUILTIN_KINDS

    try:
        if args.command == "targets":
            for name, desc in BUILTIN_KINDS.items():
                print(f"{name}\t{desc}")
        elif args.command == "run":
            cfg = harness.load_config(args.config, _overrides(args))
            report = harness.replicate(cfg)
            harness.write_report(report, args.out)
            print(f"logmse\t{report.logmse}")
        elif args.command == "sweep":
            cfg = harness.load_config(args.config, _overrides(args))
            rows = harness.sweep(cfg, args.eta, args.gamma, args.J, args.out)
            for eta, gamma, J, lm in rows:
                print(f"eta={eta}\tgamma={gamma}\tJ={J}\tlogmse={lm}")
        elif args.command == "eval":
            print(json.dumps(harness.evaluate_checkpoint(args.run_dir), sort_keys=True))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalDegeneracyError as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
