"""Command-line entry point: `srlaser <subcommand> --config ... --out ...`."""

from __future__ import annotations

import argparse
import sys

from . import harness


COMMANDS = {
    "spectrum-sweep": harness.run_spectrum_sweep,
    "steady-map": harness.run_steady_map,
    "transient": harness.run_transient,
    "thresholds": harness.run_threshold_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srlaser",
        description="Superradiant-laser sweeps with a partially driven ensemble",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel worker processes (default 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = harness.load_config(args.config)
    try:
        outputs = COMMANDS[args.command](cfg, args.out, seed=args.seed,
                                        workers=args.workers)
    except (harness.ConfigError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
