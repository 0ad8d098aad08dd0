"""Command-line front end.

Subcommands: attack, evaluate, make-target, serve-check.  Exit codes:
0 success, 2 configuration error, 3 oracle error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .attack import AttackConfig, evaluate_solution, make_target, run_attack
from .errors import ConfigError, DepthAttackError, EvaluationError, OracleError
from .imaging import load_depth_map, load_mask, save_dmap
from .oracle import RemoteOracle

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3


def _load_config(args: argparse.Namespace) -> AttackConfig:
    config = AttackConfig.from_file(args.config)
    search = config.search
    if args.seed is not None:
        search = dataclasses.replace(search, seed=args.seed)
    if args.generations is not None:
        search = dataclasses.replace(search, generations=args.generations)
    if args.budget_queries is not None:
        search = dataclasses.replace(search, query_budget=args.budget_queries)
    out_dir = str(args.out) if args.out is not None else config.out_dir
    return dataclasses.replace(config, search=search, out_dir=out_dir)


def _cmd_attack(args: argparse.Namespace) -> int:
    report = run_attack(_load_config(args))
    row = report.rows[0]
    print(f"scene={report.scene} archive={len(report.pareto)} queries={report.queries}")
    print(
        f"knee f1={row.f1:.6g} f2={row.f2:.6g} "
        f"V {row.v_original:.6g} -> {row.v_adv:.6g} ({row.reduction_pct:.1f}%)"
    )
    f1b, f2b = report.best_objectives
    print(f"best attack f1={f1b:.6g} f2={f2b:.6g}")
    print(f"artifacts in {report.out_dir}")
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    row = evaluate_solution(_load_config(args), args.solution)
    print(
        f"scene={row.scene} f1={row.f1!r} f2={row.f2!r} "
        f"V_original={row.v_original!r} V_adv={row.v_adv!r} "
        f"reduction={row.reduction_pct:.1f}% queries={row.queries}"
    )
    return EXIT_OK


def _cmd_make_target(args: argparse.Namespace) -> int:
    depth = load_depth_map(args.depth)
    mask = load_mask(args.mask)
    target = make_target(depth, mask)
    save_dmap(target, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_serve_check(args: argparse.Namespace) -> int:
    oracle = RemoteOracle(args.url, retries=args.retries)
    d = oracle.descriptor
    print(json.dumps({"name": d.name, "input_dims": list(d.input_dims), "output_dims": list(d.output_dims)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthattack",
        description="Search for texture perturbations that steer a black-box "
        "depth estimator toward a chosen depth map.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", type=Path, help="attack config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--generations", type=int, default=None)
        p.add_argument("--budget-queries", type=int, default=None)
        p.add_argument("--out", type=Path, default=None)

    p_attack = sub.add_parser("attack", help="run the search and write artifacts")
    add_config_flags(p_attack)
    p_attack.set_defaults(fn=_cmd_attack)

    p_eval = sub.add_parser("evaluate", help="re-measure a stored solution")
    add_config_flags(p_eval)
    p_eval.add_argument("solution", type=Path, help="solution JSON to re-evaluate")
    p_eval.set_defaults(fn=_cmd_evaluate)

    p_target = sub.add_parser("make-target", help="build a target depth map")
    p_target.add_argument("depth", type=Path, help="original scene depth (DMAP)")
    p_target.add_argument("mask", type=Path, help="object mask PNG")
    p_target.add_argument("--mode", default="background-fill", choices=["background-fill"])
    p_target.add_argument("--out", type=Path, required=True)
    p_target.set_defaults(fn=_cmd_make_target)

    p_check = sub.add_parser("serve-check", help="ping a model server's /descriptor")
    p_check.add_argument("url")
    p_check.add_argument("--retries", type=int, default=2)
    p_check.set_defaults(fn=_cmd_serve_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluationError as exc:
        cause = exc.__cause__
        if isinstance(cause, OracleError):
            print(f"oracle error: {cause}", file=sys.stderr)
            return EXIT_ORACLE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except DepthAttackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
