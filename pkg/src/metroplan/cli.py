"""Command-line front end: ``plan``, ``analyze`` and ``compare``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .analysis import REPORT_KINDS, AnalysisError, analyze, compare_runs, emit_report
from .planner import PlanningError
from .scenario import ScenarioError, load_scenario, run_scenario

EXIT_OK, EXIT_VALIDATION, EXIT_BLOCKED, EXIT_IO = 0, 1, 2, 3


def cmd_plan(scenario_file: str | Path, out_dir: str | Path | None = None) -> int:
    sc = load_scenario(scenario_file, out_dir)
    run_scenario(sc, echo=print)
    print(f"results written to {sc.results_dir}")
    return EXIT_OK


def parse_kinds(text: str) -> list[str]:
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    if kinds == ["all"]:
        return list(REPORT_KINDS)
    unknown = [k for k in kinds if k not in REPORT_KINDS]
    if unknown or not kinds:
        raise AnalysisError(f"unknown report kinds {unknown}; choose from {', '.join(REPORT_KINDS)} or all")
    return kinds


def cmd_analyze(results_dir: str | Path, kinds: str, out_dir: str | Path | None = None, svg: bool = False) -> list[Path]:
    selected = parse_kinds(kinds)
    a = analyze(results_dir)
    target = Path(out_dir) if out_dir else Path(results_dir) / "reports"
    written = []
    for kind in selected:
        written += emit_report(kind, a, target, svg=svg)
    for key, value in a.summary().items():
        print(f"{key}: {value:.6g}")
    return written


def cmd_compare(dir_a: str | Path, dir_b: str | Path, csv_path: str | Path | None = None) -> list[tuple]:
    rows = compare_runs(dir_a, dir_b)
    header = ("metric", "a", "b", "relative_difference_pct")
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    for metric, va, vb, rel in rows:
        print(f"{metric:>16}  {va:14.6g}  {vb:14.6g}  {rel:+9.3f}%")
    return rows


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metroplan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("plan", help="run a scenario and write result archives")
    sp.add_argument("--scenario", required=True, help="scenario YAML file")
    sp.add_argument("--out", help="results directory (overrides the scenario)")
    sa = sub.add_parser("analyze", help="emit report tables from a results directory")
    sa.add_argument("--results", required=True)
    sa.add_argument("--reports", default="all", help=f"comma list of {', '.join(REPORT_KINDS)} or all")
    sa.add_argument("--out", help="report directory (default <results>/reports)")
    sa.add_argument("--svg", action="store_true", help="also write SVG line charts")
    sc = sub.add_parser("compare", help="relative differences of run B against run A")
    sc.add_argument("dir_a")
    sc.add_argument("dir_b")
    sc.add_argument("--csv", help="write the comparison table here")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plan":
            return cmd_plan(args.scenario, args.out)
        if args.command == "analyze":
            cmd_analyze(args.results, args.reports, args.out, args.svg)
        else:
            cmd_compare(args.dir_a, args.dir_b, args.csv)
        return EXIT_OK
    except PlanningError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_BLOCKED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ScenarioError, AnalysisError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
