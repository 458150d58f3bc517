# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

"""
Command line interface: ``avgopt <command> [options]``.
"""

from __future__ import annotations

import argparse
import json
import sys

from collections.abc import Sequence
from pathlib import Path
from typing import Any

from ._errors import AvgOptError, NotUnichainError
from ._exact import (
    average_reward,
    initial_distribution,
    solve_values,
    trap_analysis,
    values_to_json,
)
from ._gradient import gradcheck_report
from ._harness import (
    _read_json,
    build_environment,
    config_from_json,
    load_config,
    run_experiment,
    run_sweep,
)
from ._hierarchy import params_from_json
from ._learner import MODES


EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avgopt",
        description="Average-reward hierarchical option-critic experiments.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def experiment_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="first seed")
        p.add_argument("--seeds", type=int, dest="n_seeds", help="number of seeds")
        p.add_argument("--out", help="output root (default: $AVGOPT_OUT or ./runs)")
        p.add_argument("--steps", type=int, help="training steps per run")
        p.add_argument(
            "--mode",
            choices=(*MODES, "both"),
            help="agent(s) to train",
        )
        p.add_argument("--gamma", type=float, help="discount of the discounted agent")
        p.add_argument("--jobs", type=int, help="worker processes")

    experiment_flags(
        commands.add_parser("train", help="train agents and write curves")
    )
    experiment_flags(
        commands.add_parser(
            "sweep", help="train every combination of a config's sweep block"
        )
    )

    gradcheck = commands.add_parser(
        "gradcheck", help="exact vs finite-difference gradients"
    )
    gradcheck.add_argument("--instances", type=int, default=20)
    gradcheck.add_argument("--seed", type=int, default=7)
    gradcheck.add_argument("--jobs", type=int, default=1)
    gradcheck.add_argument("--out", help="write the JSON report here")

    trap = commands.add_parser(
        "trap-analyze", help="discounted vs average reward on the trap chain"
    )
    trap.add_argument(
        "--gamma",
        type=float,
        action="append",
        help="discount to analyze; repeatable (default: probe set)",
    )
    trap.add_argument("--out", help="write the JSON report here")

    ev = commands.add_parser("eval", help="exact values of saved parameters")
    ev.add_argument(
        "--params", required=True, help="final_params.json of a run"
    )
    ev.add_argument("--config", help="experiment config naming the MDP")
    ev.add_argument("--out", help="write the JSON tables here")

    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    modes = None
    if args.mode == "both":
        modes = MODES
    elif args.mode is not None:
        modes = (args.mode,)
    return {
        "seed": args.seed,
        "n_seeds": args.n_seeds,
        "out": args.out,
        "total_steps": args.steps,
        "modes": modes,
        "gamma": args.gamma,
        "jobs": args.jobs,
    }


def _emit(doc: object, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _train(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    result = run_experiment(config)
    for mode, curve in result.curves.items():
        final = f"{curve.mean[-1]:.6g} ± {curve.std[-1]:.3g}" if curve.mean.size else "n/a"
        print(f"{mode}: final {final} over {curve.n_seeds} seed(s)")
    if result.failures:
        print(f"{len(result.failures)} run(s) diverged", file=sys.stderr)
    print(result.directory)
    return EXIT_OK


def _sweep(args: argparse.Namespace) -> int:
    if not args.config:
        print("avgopt: error: sweep needs --config", file=sys.stderr)
        return EXIT_USAGE
    results = run_sweep(_read_json(args.config), _overrides(args))
    for result in results:
        print(result.directory)
    return EXIT_OK


def _gradcheck(args: argparse.Namespace) -> int:
    report = gradcheck_report(args.instances, args.seed, jobs=args.jobs)
    print(report.format_table())
    if args.out:
        _emit(report.to_json(), args.out)
    return EXIT_OK if report.passed else EXIT_FAILED


def _trap_analyze(args: argparse.Namespace) -> int:
    report = trap_analysis(args.gamma)
    for row in report.rows:
        print(
            f"gamma={row.gamma:g}  v_R(S11)={row.v_red:.10g}  "
            f"v_B(S21)={row.v_blue:.10g}  chosen-at-S0={row.chosen}  "
            f"max err={row.max_error:.1e}"
        )
    print(
        f"average reward: red={report.gain_red:.10g}  "
        f"blue={report.gain_blue:.10g}"
    )
    if args.out:
        _emit(report.to_json(), args.out)
    return EXIT_OK


def _eval(args: argparse.Namespace) -> int:
    config = (
        load_config(args.config) if args.config else config_from_json({})
    )
    mdp = build_environment(config)
    params = params_from_json(_read_json(args.params))

    doc: dict[str, Any] = {
        "gain_from_start": average_reward(
            mdp, params, initial_distribution(params, mdp.start)
        )
    }
    try:
        doc["values"] = values_to_json(*solve_values(mdp, params))
    except NotUnichainError as e:
        doc["values"] = None
        doc["note"] = str(e)

    _emit(doc, args.out)
    return EXIT_OK


_COMMANDS = {
    "train": _train,
    "sweep": _sweep,
    "gradcheck": _gradcheck,
    "trap-analyze": _trap_analyze,
    "eval": _eval,
}


def cli(argv: Sequence[str] | None = None) -> int:
    """
    Run the command line and return the exit code.

    0 on success, 1 if a gradient check fails, 2 on usage or validation
    errors.
    """
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    try:
        return _COMMANDS[args.command](args)
    except (AvgOptError, OSError) as e:
        print(f"avgopt: error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli())
