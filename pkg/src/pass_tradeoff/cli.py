"""``pass-tradeoff`` command line.

Exit codes: 0 ok, 2 configuration error, 3 at least one drop failed,
4 a verification check failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ScenarioConfig, beta_grid, load_config
from .errors import ConfigInvalid
from .harness import run_scenario, run_verify

EXIT_OK, EXIT_CONFIG, EXIT_DROP, EXIT_VERIFY = 0, 2, 3, 4


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML scenario file")
    p.add_argument("--seed", type=int, help="base seed for user drops")
    p.add_argument("--drops", type=int, help="number of random user drops")
    p.add_argument("--beta-step", type=float, help="sweep beta from 0 to 1 with this step")
    p.add_argument("--order", type=int, choices=(1, 2), help="Taylor order of the SCA expansion")
    p.add_argument("--baseline", choices=("uniform",), help="also solve the uniform-placement baseline")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--workers", type=int, help="worker processes for drops")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pass-tradeoff",
                                 description="SE/EE trade-off designs for pinching-antenna downlinks")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("solve", help="run the scenario in --config"))
    p = sub.add_parser("pareto", help="beta sweep 0..1 (defaults to step 0.05)")
    _add_common(p)
    p = sub.add_parser("verify", help="cross-check the solvers against brute-force oracles")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="write the reports as JSON here")
    return ap


def _scenario(args, sweep: bool) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.drops is not None:
        if args.drops < 1:
            raise ConfigInvalid("--drops must be >= 1")
        changes["drops"] = args.drops
    if args.beta_step is not None:
        changes["betas"] = beta_grid(0.0, 1.0, args.beta_step)
    elif sweep and not args.config:
        changes["betas"] = beta_grid(0.0, 1.0, 0.05)
    if args.order is not None:
        changes["order"] = args.order
    if args.baseline:
        changes["baseline"] = True
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigInvalid("--workers must be >= 1")
        changes["workers"] = args.workers
    return cfg.with_(**changes)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        reports = run_verify(args.level, seed=args.seed)
        for r in reports:
            print(r.line())
        if args.out:
            args.out.parent.mkdir(parents=True, exist_ok=True)
            args.out.write_text(json.dumps([r.as_dict() for r in reports], indent=2, default=float))
        failed = sum(not r.passed for r in reports)
        print(f"{len(reports) - failed}/{len(reports)} checks passed")
        return EXIT_VERIFY if failed else EXIT_OK
    try:
        cfg = _scenario(args, sweep=args.command == "pareto")
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    res = run_scenario(cfg)
    print(f"{len(res.rows)} rows written to {res.out_dir}")
    for drop, err in sorted(res.failures.items()):
        print(f"drop {drop} failed: {err}", file=sys.stderr)
    return EXIT_DROP if res.failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
