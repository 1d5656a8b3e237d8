"""Command-line entry point: ``rddlab <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 run failure (non-finite loss),
3 acceptance-check failure in ``verify-stats``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from rddlab.baselines import ESTIMATORS
from rddlab.envs import ENVS
from rddlab.estimator import NonFiniteLossError
from rddlab.harness.config import AGENTS, ABLATE_PARAMS, COMMANDS, TOY_MODES, ConfigError, resolve_config
from rddlab.harness.experiments import COMMAND_RUNNERS
from rddlab.nn import NonFiniteGradientError

EXIT_OK, EXIT_USAGE, EXIT_RUN_FAILURE, EXIT_CHECK_FAILED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; route that to our usage code instead."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key=value config file (flags override it)")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="comma-separated seed list, e.g. 0,1,2")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--format", choices=("csv", "json"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rddlab", description="Random distribution distillation experiments")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True

    p = sub.add_parser("verify-stats", help="Monte-Carlo check of the visitation statistics")
    _common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--ns", help="comma-separated visit counts")

    p = sub.add_parser("toy", help="bonus traces on synthetic 2-D points")
    _common(p)
    p.add_argument("--mode", choices=TOY_MODES)
    p.add_argument("--dim", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--drnd-n", dest="drnd_n", type=int)

    p = sub.add_parser("train", help="train an agent with an exploration bonus")
    _common(p)
    p.add_argument("--env", choices=ENVS)
    p.add_argument("--agent", choices=AGENTS)
    p.add_argument("--bonus", choices=ESTIMATORS)
    p.add_argument("--steps", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--drnd-n", dest="drnd_n", type=int)
    p.add_argument("--lambda", dest="lam", type=float, help="bonus scale (lambda for Q-learning, beta for PPO)")

    p = sub.add_parser("density", help="MountainCar x-position density per window")
    _common(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--bonuses", help="comma-separated estimators, e.g. rdd,none")

    p = sub.add_parser("ablate", help="sweep mu, sigma or output dimension")
    _common(p)
    p.add_argument("--param", choices=ABLATE_PARAMS)
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--episodes", type=int)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        cfg = resolve_config(args.command, args.config, overrides)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        summary = COMMAND_RUNNERS[cfg.command](cfg)
    except (NonFiniteLossError, NonFiniteGradientError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    print(json.dumps(summary, default=str))
    if cfg.command == "verify-stats" and not summary["passed"]:
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
