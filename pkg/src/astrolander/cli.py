"""Command-line interface: train, eval, simulate, validate.

Exit codes: 0 success, 2 configuration error, 3 checkpoint error,
4 validation failure, 1 unexpected error.  The output directory from the
config can be overridden with the ASTROLANDER_OUTPUT_DIR environment
variable.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (ConfigError, load_config, run_eval, run_simulate,
                      run_train, run_validate)
from .neural import CheckpointError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_VALIDATION = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="astrolander",
        description="6-DOF asteroid close-proximity landing lab: train, "
                    "evaluate, and inspect recurrent guidance policies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy with PPO")
    p_train.add_argument("--config", required=True, help="JSON run config")
    p_train.add_argument("--resume", help="checkpoint to resume from")
    p_train.add_argument("--plots", action="store_true",
                         help="emit learning-curve SVGs when done")

    p_eval = sub.add_parser("eval", help="Monte Carlo evaluation of a checkpoint")
    p_eval.add_argument("--config", required=True, help="JSON run config")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, default=None,
                        help="override the config episode count")

    p_sim = sub.add_parser("simulate",
                           help="single-episode trajectory log for one seed")
    p_sim.add_argument("--config", required=True, help="JSON run config")
    p_sim.add_argument("--checkpoint", required=True)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--plots", action="store_true",
                       help="emit a trajectory SVG alongside the CSV")

    p_val = sub.add_parser("validate",
                           help="run the physics and gradient oracle suite")
    p_val.add_argument("--config", help="optional JSON run config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = load_config(args.config)
            result = run_train(cfg, resume=args.resume, plots=args.plots)
            print(f"final checkpoint: {result['checkpoint']}")
            print(f"training log: {result['log']}")
        elif args.command == "eval":
            cfg = load_config(args.config)
            report = run_eval(cfg, args.checkpoint, n_episodes=args.episodes)
            for key in sorted(report.aggregates):
                print(f"{key}: {report.aggregates[key]}")
        elif args.command == "simulate":
            cfg = load_config(args.config)
            result = run_simulate(cfg, args.checkpoint, args.seed,
                                  plots=args.plots)
            print(f"trajectory: {result['trajectory']}")
            summary = result["summary"]
            print(f"reason: {summary['reason']} miss: {summary['miss']:.3f} m "
                  f"speed: {summary['speed']:.4f} m/s good: {summary['good']}")
        elif args.command == "validate":
            cfg = load_config(args.config) if args.config else None
            checks = run_validate(cfg)
            failed = [c for c in checks if not c.passed]
            for c in checks:
                status = "PASS" if c.passed else "FAIL"
                print(f"{status} {c.name}: measured {c.measured:.3e} "
                      f"(tolerance {c.tolerance:.3e})")
            if failed:
                print(f"{len(failed)} check(s) failed:"
                      f" {', '.join(c.name for c in failed)}")
                return EXIT_VALIDATION
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT


if __name__ == "__main__":
    sys.exit(main())
