"""Command-line entry point.

One subcommand per experiment kind; flags override the config file, which
overrides the preset. The output directory defaults to runs/<kind>-<preset>
so repeated invocations with the same settings land in (and overwrite) the
same place, keeping reruns comparable.
"""

from __future__ import annotations

import argparse
import sys

from .config import KINDS, PRESETS, ConfigError, load_config
from .harness import run_experiment

__all__ = ["main", "build_parser"]

_KIND_HELP = {
    "gamma-sweep": "train across gain exponents, loss orders, and seeds",
    "fd-compare": "compare exact derivative matching with finite differences",
    "train": "train a single policy and save a checkpoint",
    "eval": "evaluate a checkpoint, optionally with stability certificates",
    "verify-diss": "empirically test the system's incremental stability",
    "dagger": "interactive imitation with expert/learner mixture rollouts",
    "dart": "imitation from noise-injected expert demonstrations",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taylorbc",
        description="imitation-learning laboratory with derivative-matching losses",
    )
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in KINDS:
        k = sub.add_parser(kind, help=_KIND_HELP[kind])
        k.add_argument("--config", help="INI config file (see README for keys)")
        k.add_argument("--out", help="output directory (default runs/<kind>-<preset>)")
        k.add_argument(
            "--seed", type=int, action="append", dest="seeds", metavar="SEED",
            help="run seed; repeat the flag for several (overrides config seeds)",
        )
        k.add_argument("--preset", choices=sorted(PRESETS), help="named scale preset")
        k.add_argument("--threads", type=int, help="worker processes for sweeps")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            kind=args.kind,
            preset=args.preset,
            seeds=tuple(args.seeds) if args.seeds else None,
            threads=args.threads,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out or f"runs/{cfg.kind}-{cfg.preset}"
    manifest = run_experiment(cfg, out)
    for name in manifest["artifacts"]:
        print(f"{out}/{name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
