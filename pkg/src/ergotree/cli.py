"""Command-line entry point: ``python -m ergotree <subcommand>``."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, ErgotreeError
from .harness import (
    CATALOG_CHAINS,
    CATALOG_OBSERVABLES,
    CATALOG_SYSTEMS,
    ExperimentConfig,
    load_config,
    run,
)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="base TOML config; flags override its entries")
    p.add_argument("--system", help="catalog system id")
    p.add_argument("--observable", help="e.g. indicator:0, cylinder:1,2,3,4, identity, cos2pi")
    p.add_argument("--points", type=int, help="number of sampled points")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output CSV path or directory")
    p.add_argument("--workers", type=int, help="worker processes (default: all cores)")


def _averaging(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-max", type=int, help="largest complete-tree level")
    p.add_argument("--beam", type=int, help="nodes expanded per level for infinitely branching systems")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergotree", description="Weighted ergodic averages along trees.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("catalog", help="list systems, chains and observables")
    p = sub.add_parser("run", help="run an experiment from a TOML config")
    p.add_argument("config")
    p.add_argument("--workers", type=int)
    for name, text in [
        ("backward", "backward averages over complete preimage trees"),
        ("forward", "ball averages of a free-group action"),
        ("boundary", "averages over balls acting on the boundary"),
    ]:
        p = sub.add_parser(name, help=text)
        _common(p)
        _averaging(p)
    p = sub.add_parser("tiling", help="greedy tilings of complete trees")
    _common(p)
    p.add_argument("--assignment", help="constant:<h> or first_symbol:<h0>,<h1>,...")
    p.add_argument("--N", type=int, action="append", help="tree height (repeatable)")
    p.add_argument("--epsilon", type=float, help="pick N from the covering argument instead")
    p = sub.add_parser("markov", help="return-time statistics of a chain")
    p.add_argument("--config")
    p.add_argument("--chain", help="two_state, finfty_chain or uniform_free:r=<n>")
    p.add_argument("--state", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--max-horizon", type=int)
    p.add_argument("--survival-depth", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    raw = load_config(args.config) if getattr(args, "config", None) else {}
    raw["experiment"] = args.command
    for key in ("system", "observable", "points", "seed", "out", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if getattr(args, "n_max", None) is not None:
        raw.setdefault("trees", {"kind": "complete"})["n_max"] = args.n_max
    if getattr(args, "beam", None) is not None:
        raw.setdefault("truncation", {})["beam"] = args.beam
    if args.command == "tiling":
        tiling = raw.setdefault("tiling", {})
        if args.assignment:
            tiling["assignment"] = args.assignment
        if args.N:
            tiling["N"] = args.N
        if args.epsilon is not None:
            tiling["epsilon"] = args.epsilon
    if args.command == "markov":
        markov = raw.setdefault("markov", {})
        for key in ("chain", "state", "samples", "max_horizon", "survival_depth"):
            value = getattr(args, key)
            if value is not None:
                markov[key] = value
    return ExperimentConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "catalog":
            print("systems:")
            for s in CATALOG_SYSTEMS:
                print(f"  {s}")
            print("chains:")
            for c in CATALOG_CHAINS:
                print(f"  {c}")
            print("observables:")
            for o in CATALOG_OBSERVABLES:
                print(f"  {o}")
            return 0
        if args.command == "run":
            cfg = ExperimentConfig.from_dict(load_config(args.config))
            manifest = run(cfg, workers=args.workers)
        else:
            manifest = run(_config_from_args(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ErgotreeError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in manifest.outputs:
        print(path)
    return 0
