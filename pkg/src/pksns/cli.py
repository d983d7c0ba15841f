"""
Command-line entry point.

Subcommands mirror the scenario kinds: simulate, semigroup, sweep, blowup,
verify.  Each takes --config <path>, --out <dir>, --threads <n> and
--dry-run.  Exit codes: 0 completed, 2 blow-up detected (simulate),
3 config error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import KINDS, ConfigError, load_config
from .scenarios import EXIT_CONFIG, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pksns",
        description=(
            "Pseudo-spectral simulator and verification suite for the "
            "coupled chemotaxis-fluid system around a strong Poiseuille flow."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a '{kind}' scenario")
        p.add_argument("--config", required=True, help="path to the TOML scenario config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=None, help="worker pool size")
        p.add_argument(
            "--dry-run",
            action="store_true",
            help="print the resolved config and derived quantities, then exit",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.kind != args.command:
        print(
            f"config error: config kind '{cfg.kind}' does not match "
            f"subcommand '{args.command}'",
            file=sys.stderr,
        )
        return EXIT_CONFIG

    if args.dry_run:
        print(f"kind = {cfg.kind}")
        print(f"grid: nx={cfg.grid.nx} ny={cfg.grid.ny} ly={cfg.grid.ly} "
              f"dealias_fraction={cfg.grid.dealias_fraction}")
        print(f"seed = {cfg.seed}")
        print(f"output_dir = {args.out if args.out else cfg.output_dir}")
        if cfg.kind != "verify":
            try:
                for name, value in cfg.derived_quantities().items():
                    print(f"{name} = {value!r}")
            except ConfigError:
                pass
        return 0

    try:
        return run(cfg, out_dir=args.out, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
