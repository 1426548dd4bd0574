"""
rwcheck - command-line front end
Runs a scenario (explore, starve-search, random, bench) or compares two scenarios and
writes a report to stdout or --out.

Exit codes: 0 ok, 1 usage/scenario error, 2 property violated, 3 state budget exceeded.
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from services.errors import RwCheckError, ScenarioError
from services.explorer import ExecutionTrace, bypass_count, explore, find_starvation_schedule, run_random
from services.fairness_probe import fairness_probe
from services.report_generator import ReportGenerator, emit_csv, emit_json, normalize
from services.scenario_loader import (
    MODE_BENCH,
    MODE_EXPLORE,
    MODE_RANDOM,
    MODE_STARVE_SEARCH,
    ScenarioFile,
    load_scenario,
)
from utils import settings

logger = logging.getLogger("rwcheck")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2
EXIT_BUDGET = 3

generator = ReportGenerator()


def execute(scenario: ScenarioFile) -> Tuple[Dict[str, Any], Dict[str, ExecutionTrace], int]:
    """
    Run one scenario.

    Returns:
        (result section of the report, named traces for --trace, exit code)
    """
    config = scenario.system_config()
    traces: Dict[str, ExecutionTrace] = {}

    if scenario.mode == MODE_EXPLORE:
        verdict = explore(config, scenario.budget)
        result = generator.build_explore_result(verdict)
        if not verdict.complete:
            return result, traces, EXIT_BUDGET
        traces.update(verdict.witnesses)
        for i, (trace, prop) in enumerate(verdict.safety_violations):
            traces[f"violation-{i}-{prop}"] = trace
        for i, (trace, _) in enumerate(verdict.deadlocks):
            traces[f"deadlock-{i}"] = trace
        code = EXIT_OK if verdict.holds else EXIT_VIOLATION
        return result, traces, code

    if scenario.mode == MODE_STARVE_SEARCH:
        writer = scenario.m  # first writer pid
        trace = find_starvation_schedule(config, scenario.horizon)
        bypass = bypass_count(trace, writer) if trace is not None else []
        if trace is not None:
            traces["starvation"] = trace
        return generator.build_starvation_result(scenario.horizon, trace, writer, bypass), traces, EXIT_OK

    if scenario.mode == MODE_RANDOM:
        trace, stats = run_random(config, scenario.seed, scenario.max_steps)
        traces["random"] = trace
        failed = bool(trace.violations) or trace.end_reason == "deadlock"
        return generator.build_random_result(trace, stats), traces, EXIT_VIOLATION if failed else EXIT_OK

    report = fairness_probe(scenario.workload_spec())
    code = EXIT_VIOLATION if report.exclusion_violations else EXIT_OK
    return generator.build_bench_result(report), traces, code


def run_document(scenario: ScenarioFile) -> Tuple[Dict[str, Any], Dict[str, ExecutionTrace], int]:
    started = time.perf_counter()
    result, traces, code = execute(scenario)
    document = generator.generate_report(scenario, result, time.perf_counter() - started)
    return normalize(document), traces, code


def _write(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")
        logger.info(f"✅ Report written to {out}")


def _dump_traces(traces: Dict[str, ExecutionTrace], directory: Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, trace in traces.items():
        trace.write(directory / f"{name}.jsonl")
    logger.info(f"✅ {len(traces)} traces written to {directory}")


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    document, traces, code = run_document(scenario)
    if args.format == "csv":
        _write(emit_csv(generator.result_table(document)), args.out)
    else:
        _write(emit_json(document), args.out)
    if args.trace:
        _dump_traces(traces, args.trace)

    if code == EXIT_VIOLATION:
        logger.warning(f"⚠️ {args.scenario}: property violated")
    elif code == EXIT_BUDGET:
        logger.warning(f"⚠️ {args.scenario}: state budget exceeded")
    return code


def check_comparable(first: ScenarioFile, second: ScenarioFile) -> None:
    """Both random or both bench, identical apart from variant, policy and seed"""
    modes = {first.mode, second.mode}
    if modes not in ({MODE_RANDOM}, {MODE_BENCH}):
        raise ScenarioError("mode", f"compare needs two random or two bench scenarios, got {sorted(modes)}")
    if first.shape() != second.shape():
        raise ScenarioError("shape", f"scenario shapes differ: {first.shape()} vs {second.shape()}")


def cmd_compare(args: argparse.Namespace) -> int:
    first, second = load_scenario(args.first), load_scenario(args.second)
    check_comparable(first, second)
    started = time.perf_counter()
    doc_a, _, _ = run_document(first)
    doc_b, _, _ = run_document(second)
    report = generator.generate_compare_report(doc_a, doc_b, time.perf_counter() - started)

    if args.format == "json":
        _write(emit_json(report), args.out)
    else:
        table = generator.compare_table(doc_a, doc_b)
        if args.format == "csv":
            _write(emit_csv(table), args.out)
        else:
            _write(table.to_string(index=False) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rwcheck", description="Reader-writer semaphore model checker and lock bench")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one scenario file")
    run.add_argument("scenario", type=Path, help="Scenario JSON file")
    run.add_argument("--out", type=Path, help="Write the report here instead of stdout")
    run.add_argument("--format", choices=["json", "csv"], default="json", help="Report format")
    run.add_argument("--trace", type=Path, metavar="DIR", help="Dump witness traces as JSON Lines")
    run.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    run.set_defaults(handler=cmd_run)

    compare = sub.add_parser("compare", help="Compare two random or two bench scenarios")
    compare.add_argument("first", type=Path, help="Scenario A")
    compare.add_argument("second", type=Path, help="Scenario B")
    compare.add_argument("--out", type=Path, help="Write the table here instead of stdout")
    compare.add_argument("--format", choices=["json", "csv", "table"], default="table", help="Output format")
    compare.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    compare.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code else EXIT_OK

    level = logging.WARNING if args.quiet else getattr(logging, settings.LOG_LEVEL, logging.INFO)
    logging.basicConfig(level=level, format=settings.LOG_FORMAT, stream=sys.stderr)

    try:
        return args.handler(args)
    except RwCheckError as e:
        logger.error(f"❌ {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
