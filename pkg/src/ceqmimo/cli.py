"""Command-line entry point: ``ceqmimo run`` and ``ceqmimo validate``."""
from __future__ import annotations

import argparse
import sys

from . import __version__


def _cmd_run(args) -> int:
    from .experiment import ConfigError, run_experiment

    try:
        manifest = run_experiment(args.config, args.output, workers=args.workers, seed=args.seed)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    print(
        f"wrote {manifest['n_rows']} rows ({manifest['n_infeasible']} infeasible) to {args.output}/results.csv "
        f"[config {manifest['config_hash']}, seed {manifest['seed']}]"
    )
    return 0


def _cmd_validate(args) -> int:
    from .validate import run_all

    results = run_all(inject_phi_error=args.inject_phi_sign_error)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ceqmimo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a sweep described by a YAML config")
    p_run.add_argument("config", help="YAML configuration file")
    p_run.add_argument("-o", "--output", required=True, help="output directory")
    p_run.add_argument("-w", "--workers", type=int, default=None, help="worker processes (overrides config)")
    p_run.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="run the built-in invariant checks")
    p_val.add_argument(
        "--inject-phi-sign-error",
        action="store_true",
        help="flip the sign of the quantization coupling (demonstrates that the checks can fail)",
    )
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
