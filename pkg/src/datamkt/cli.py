"""Command-line front end.

Subcommands: generate (build an instance file from a generator spec),
analyze (equilibria / optimum / welfare-regret report), simulate (seeded
learning runs with trace and summary files), validate (run every model
invariant against an instance file).

Exit codes: 0 ok, 2 parse error, 3 enumeration budget exceeded,
4 unsupported externality model, 5 internal invariant breach.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import equilibrium, instances, metrics
from .errors import (
    BudgetExceededError,
    InvariantError,
    MarketError,
    ParseError,
    UnsupportedModelError,
)
from .learning.engine import simulate
from .market import load_instance, save_instance, validate_instance

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_BUDGET = 3
EXIT_UNSUPPORTED = 4
EXIT_INVARIANT = 5


def _write_json(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_generate(args) -> int:
    try:
        doc = json.loads(Path(args.instance).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read generator spec {args.instance}: {exc}") from exc
    spec = instances.spec_from_dict(doc)
    instance = instances.build_instance(spec)
    save_instance(instance, args.out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    instance = load_instance(args.instance)
    report = equilibrium.wrae(instance, budget=args.budget)
    _write_json(report.to_dict(instance), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    instance = load_instance(args.instance)
    checks = validate_instance(instance, expect_symmetric=args.expect_symmetric)
    doc = {
        "schema_version": 1,
        "all_ok": all(c.ok for c in checks),
        "checks": [{"name": c.name, "ok": c.ok, "detail": c.detail} for c in checks],
    }
    _write_json(doc, args.out)
    return EXIT_OK


def _parse_alpha(text: str | None):
    if text is None or text == "instance":
        return None
    if text == "corollary":
        return "corollary"
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"--alpha must be a number or 'corollary', got {text!r}") from exc


def cmd_simulate(args) -> int:
    instance = load_instance(args.instance)
    learners = args.learner.split(",") if "," in args.learner else args.learner
    alpha = _parse_alpha(args.alpha)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    final_eff, final_wel, final_real = [], [], []
    for seed in args.seeds:
        trace = simulate(instance, args.rounds, learners=learners, seed=seed,
                         alpha=alpha, k_cap=args.k_cap)
        series = metrics.compute_regrets(instance, trace, budget=args.budget)
        trace_path = out_dir / f"trace_{seed}.jsonl"
        with open(trace_path, "w", encoding="utf-8") as fh:
            for t in range(trace.total_rounds):
                fh.write(json.dumps(trace.round_record(t)) + "\n")
            fh.write(json.dumps({
                "summary": True,
                "seed": seed,
                "T": trace.total_rounds,
                "learners": list(trace.learners),
                "alpha_mode": trace.alpha_mode,
                "backend": trace.backend,
                "effective_regret": [float(v) for v in series.effective_cum[-1]],
                "welfare_regret": float(series.welfare_cum[-1]),
                "realized_effective_regret":
                    [float(v) for v in series.realized_effective_cum[-1]],
            }) + "\n")
        metrics.write_regret_csv(out_dir / f"regret_{seed}.csv", series)
        final_eff.append(series.effective_cum[-1])
        final_wel.append(series.welfare_cum[-1])
        final_real.append(series.realized_effective_cum[-1])

    eff = np.asarray(final_eff)
    wel = np.asarray(final_wel)
    real = np.asarray(final_real)
    _write_json({
        "schema_version": 1,
        "T": args.rounds,
        "seeds": list(args.seeds),
        "learners": learners if isinstance(learners, list) else [learners],
        "alpha": args.alpha if args.alpha is not None else "instance",
        "effective_regret": {"mean": eff.mean(axis=0).tolist(),
                             "std": eff.std(axis=0).tolist()},
        "welfare_regret": {"mean": float(wel.mean()), "std": float(wel.std())},
        "realized_effective_regret": {"mean": real.mean(axis=0).tolist(),
                                      "std": real.std(axis=0).tolist()},
    }, str(out_dir / "summary.json"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="datamkt",
        description="Fixed-price data-market game: analysis and simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build an instance file from a generator spec")
    p.add_argument("--instance", required=True,
                   help="generator spec document (JSON, field 'kind' plus parameters)")
    p.add_argument("--out", required=True, help="instance file to write")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="equilibria, optimum, and welfare regret")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", help="report file (stdout when omitted)")
    p.add_argument("--budget", type=int, default=None,
                   help="max number of profiles to enumerate")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="seeded learning simulation")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("-T", "--rounds", dest="rounds", type=int, required=True)
    p.add_argument("--seeds", type=int, nargs="+", required=True)
    p.add_argument("--alpha", default=None,
                   help="number, 'corollary' for the adaptive schedule, or "
                        "'instance' (default) for the instance's weight")
    p.add_argument("--learner", default="zooming",
                   help="one of zooming|ucb|dominant-scripted|random, or a "
                        "comma list with one entry per buyer")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--k-cap", dest="k_cap", type=int, default=12)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="check every model invariant of an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", help="report file (stdout when omitted)")
    p.add_argument("--expect-symmetric", action="store_true",
                   help="also require mirrored joint externalities")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except UnsupportedModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except InvariantError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except MarketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
