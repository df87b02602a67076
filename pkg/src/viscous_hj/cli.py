"""Command-line entry point: ``viscous-hj <subcommand>``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import acceptance
from .harness import (
    CHECKS,
    ExperimentConfig,
    _json_default,
    apply_checks,
    load_configs,
    oracle_compare,
    output_root,
    read_trajectory_csv,
    run_batch,
    run_experiment,
)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the initial-data seed")
    p.add_argument("--beta", type=float, default=None, help="override the decay exponent beta")
    p.add_argument("--tolerance", type=float, default=None, help="relative slack for bound checks")
    p.add_argument("--out", default=None, help="output root (else $VISCOUS_HJ_OUT)")


def _override(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes["initial"] = dataclasses.replace(cfg.initial, seed=args.seed)
    if args.beta is not None:
        changes["beta"] = args.beta
    if args.tolerance is not None:
        changes["tolerance"] = args.tolerance
    return cfg.replace(**changes) if changes else cfg


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default)


def _status_line(rep) -> str:
    t_star = "-" if rep.t_star is None else f"{rep.t_star:.6g}"
    return f"{rep.id}: {rep.status} steps={rep.steps} t_star={t_star} ({rep.wall_clock:.2f}s)"


def cmd_run(args) -> int:
    configs = load_configs(args.config)
    if len(configs) != 1:
        print(f"{args.config} holds {len(configs)} experiments; use 'batch'", file=sys.stderr)
        return 2
    rep = run_experiment(_override(configs[0], args), args.out)
    print(_dump(rep.to_dict()))
    return 0 if rep.passed else 1


def cmd_batch(args) -> int:
    configs = [_override(c, args) for c in load_configs(args.config)]
    reports = run_batch(configs, args.parallel, args.out, args.executor)
    for rep in reports:
        print(_status_line(rep))
    root = output_root(args.out)
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
        (root / "batch.json").write_text(_dump([r.to_dict() for r in reports]))
    return 0 if all(r.passed for r in reports) else 1


def cmd_verify(args) -> int:
    traj = read_trajectory_csv(args.trajectory, q=args.q)
    checks = args.checks or [c for c in CHECKS if c != "bernstein_diagnostic"]
    cfg = ExperimentConfig(
        id=Path(args.trajectory).stem,
        a=args.a,
        p=args.p,
        lengths=(1.0,) * args.dimension,
        cells=(3,) * args.dimension,
        checks=tuple(checks),
        tolerance=args.tolerance if args.tolerance is not None else 0.05,
        beta=args.beta,
    )
    results, rates = apply_checks(traj, cfg, None)
    passed = all(r["passed"] for r in results.values())
    print(_dump({"trajectory": str(args.trajectory), "passed": passed, "checks": results, "rates": rates}))
    return 0 if passed else 1


def cmd_oracle(args) -> int:
    out = [oracle_compare(_override(c, args), args.halvings) for c in load_configs(args.config)]
    print(_dump(out if len(out) > 1 else out[0]))
    return 0


def cmd_accept(args) -> int:
    results = acceptance.run_all(echo=print)
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed")
    return 0 if n_ok == len(results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viscous-hj", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("config")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run every experiment in a JSON config")
    p.add_argument("config")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--executor", choices=("thread", "process"), default="thread")
    _common(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("verify", help="apply checks to a trajectory CSV")
    p.add_argument("trajectory")
    p.add_argument("--checks", nargs="+", choices=CHECKS, default=None)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--dimension", type=int, choices=(1, 2), default=1)
    p.add_argument("--q", type=float, default=2.0)
    _common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle-compare", help="compare a p=2 run with the Cole-Hopf solution")
    p.add_argument("config")
    p.add_argument("--halvings", type=int, default=1)
    _common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("accept", help="run the acceptance suite")
    p.set_defaults(func=cmd_accept)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
