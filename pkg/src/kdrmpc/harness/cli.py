"""Command-line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .commands import check_results, cmd_montecarlo, cmd_pipeline, cmd_robust_baseline, cmd_sensitivity
from .config import ConfigError, from_mapping, load_config
from .pipeline import StageError

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_CHECK = 0, 2, 3, 4

log = logging.getLogger("kdrmpc")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kdrmpc", description="Koopman tube MPC with DRO backoffs")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("pipeline", "offline design; writes bundle.json"),
                        ("montecarlo", "closed-loop Monte-Carlo runs"),
                        ("sensitivity", "backoff table over sample counts and radii"),
                        ("robust-baseline", "Monte-Carlo with worst-case backoffs"),
                        ("report", "summarize outputs; --check evaluates acceptance checks")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, help="TOML or JSON experiment file")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", type=Path)
        s.add_argument("--runs", type=int)
        s.add_argument("--threads", type=int)
        if name == "report":
            s.add_argument("--check", action="store_true", help="exit 4 if any check fails")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else from_mapping({})
        cfg = cfg.with_overrides(seed=args.seed, runs=args.runs, threads=args.threads, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "report":
        results = check_results(cfg.out)
        failed = False
        for name, status, detail in results:
            print(f"{status:4s}  {name}: {detail}")
            failed |= status == "FAIL"
        return EXIT_CHECK if (args.check and failed) else EXIT_OK

    run = {"pipeline": cmd_pipeline, "montecarlo": cmd_montecarlo, "sensitivity": cmd_sensitivity,
           "robust-baseline": cmd_robust_baseline}[args.command]
    try:
        summary = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    brief = {k: v for k, v in summary.items() if not isinstance(v, list) or len(v) <= 8}
    print(json.dumps(brief, sort_keys=True, indent=1, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
