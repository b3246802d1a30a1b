"""Command-line interface.

Exit codes: 0 success, 1 failed verification or I/O error, 2 invalid input,
3 numerical infeasibility.
"""
from __future__ import annotations

import argparse
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from .benchmarks import compare_mechanisms
from .horizontal import check_horizontal_equilibrium, compute_H
from .io import FORMATS, emit_comparison, emit_report, fmt, load_config
from .model import NumericalInfeasibility, ScenarioError
from .pricing import optimal_operator_solution

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2, 3


def _format(args, config) -> str:
    return args.format or config.output_format


def cmd_solve(args) -> int:
    config = load_config(args.scenario)
    scenario = config.scenario
    out_format = _format(args, config)
    if args.structure == "tolerant":
        if scenario.beta != 0:
            print(f"note: beta={fmt(scenario.beta)} replaced by 0 for congestion-tolerant users")
        scenario = scenario.replace(beta=0.0)
    if args.structure == "horizontal":
        result = check_horizontal_equilibrium(scenario)
        extra = {"H": result.H, "equilibrium_exists": str(result.exists).lower(),
                 "mutual_best_response": str(result.fixed_point).lower()}
        if "proviso_holds" in result.details:
            extra["threshold_proviso_holds"] = str(result.details["proviso_holds"]).lower()
        report = result.report or optimal_operator_solution(scenario)
        if not result.exists:
            extra["note"] = "no horizontal equilibrium; tables show the vertical outcome"
    else:
        report = optimal_operator_solution(scenario)
        extra = {}
        if args.structure == "vertical" and report.threshold > 0 and scenario.beta > 0:
            extra["H"] = compute_H(scenario, report)
    paths = emit_report(report, out_format, args.out, extra)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_compare(args) -> int:
    config = load_config(args.scenario)
    out_format = _format(args, config)
    result = compare_mechanisms(config.scenario, provenance=args.provenance or config.scenario.name)
    for name, report in result["reports"].items():
        for p in emit_report(report, out_format, args.out, prefix=f"{name.lower()}_"):
            print(p)
    print(emit_comparison(result["rows"], out_format, args.out))
    for name, err in result["errors"].items():
        print(f"{name} failed: {err}", file=sys.stderr)
    return EXIT_OK if not result["errors"] else EXIT_INFEASIBLE


def cmd_verify(args) -> int:
    from .verification import run_checks, scenario_checks

    ok = True
    if args.scenario:
        scenario = load_config(args.scenario).scenario
        for name, passed, detail in scenario_checks(scenario, args.seed):
            print(f"[{'PASS' if passed else 'FAIL'}] {scenario.name}: {name} ({detail})")
            ok &= passed
    for res in run_checks(args.trials, args.seed):
        print(f"[{'PASS' if res.passed else 'FAIL'}] random: {res.name} "
              f"({res.trials - res.failures}/{res.trials}, worst ratio {res.worst:.3g})")
        ok &= res.passed
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(args) -> int:
    files = sorted(Path(args.scenarios).glob("*.json"))
    if not files:
        raise ScenarioError("scenarios", f"no *.json files in {args.scenarios}")
    out_root = Path(args.out) if args.out else None
    lock = threading.Lock()

    def run(path: Path) -> tuple[str, int, str]:
        try:
            config = load_config(path)
            report = optimal_operator_solution(config.scenario)
        except ScenarioError as exc:
            return path.name, EXIT_INVALID, str(exc)
        except NumericalInfeasibility as exc:
            return path.name, EXIT_INFEASIBLE, str(exc)
        line = (f"x*={report.threshold} c={fmt(report.common_cost)} "
                f"W_S={fmt(report.server_cost)} W_O={fmt(report.operator_profit)}")
        if out_root is not None:
            with lock:
                emit_report(report, _format(args, config), out_root / path.stem)
        return path.name, EXIT_OK, line

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(run, files))
    worst = EXIT_OK
    for name, code, line in results:
        print(f"{name}: {line}")
        worst = max(worst, code)
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flpricing", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one scenario")
    solve.add_argument("structure", choices=("vertical", "horizontal", "tolerant"))
    solve.add_argument("--scenario", required=True)
    solve.add_argument("--out", required=True)
    solve.add_argument("--format", choices=FORMATS)
    solve.set_defaults(func=cmd_solve)

    compare = sub.add_parser("compare", help="IJD against the NJO and NDP benchmarks")
    compare.add_argument("--scenario", required=True)
    compare.add_argument("--out", required=True)
    compare.add_argument("--format", choices=FORMATS)
    compare.add_argument("--provenance", help="label for the comparison table (default: scenario name)")
    compare.set_defaults(func=cmd_compare)

    verify = sub.add_parser("verify", help="run the property checks")
    verify.add_argument("--scenario")
    verify.add_argument("--trials", type=int, default=20)
    verify.add_argument("--seed", type=int, default=0)
    verify.set_defaults(func=cmd_verify)

    sweep = sub.add_parser("sweep", help="solve every scenario in a directory")
    sweep.add_argument("--scenarios", required=True)
    sweep.add_argument("--out")
    sweep.add_argument("--format", choices=FORMATS)
    sweep.add_argument("--workers", type=int, default=4)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalInfeasibility as exc:
        print(f"numerically infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
