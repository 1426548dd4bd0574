"""
Report Generator Service - JSON / CSV Export
Turns verdicts, traces and fairness reports into stable report documents.
"""

import json
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from services import __version__
from services.explorer import BypassStats, ExecutionTrace, Verdict
from services.fairness_probe import FairnessReport
from services.programs import SEMAPHORE_NAMES, StepKind
from services.scenario_loader import ScenarioFile

TOOL_NAME = "rwcheck"
FLOAT_DIGITS = 6
CSV_FLOAT_FORMAT = "%.6f"


def normalize(value: Any) -> Any:
    """Round floats and turn numpy scalars and int keys into plain JSON values"""
    if isinstance(value, dict):
        return {str(k): normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [normalize(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return round(float(value), FLOAT_DIGITS)
    return value


def emit_json(document: Dict[str, Any]) -> str:
    """Two-space indented JSON; emitting a parsed report gives the same bytes"""
    return json.dumps(normalize(document), indent=2) + "\n"


def emit_csv(table: pd.DataFrame) -> str:
    return table.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def _p99(values: List[int]) -> Optional[float]:
    return float(np.percentile(values, 99)) if values else None


def _records(table: pd.DataFrame) -> List[Dict[str, Any]]:
    """Row dicts with NaN turned into None"""
    return table.astype(object).where(table.notna(), None).to_dict(orient="records")


class ReportGenerator:
    """
    Build report documents: tool, scenario, result, timing (in that order).

    Everything except timing.wall_clock_s is a function of the scenario alone for
    explore, starve-search and random runs.
    """

    def generate_report(self, scenario: ScenarioFile, result: Dict[str, Any], wall_clock_s: float) -> Dict[str, Any]:
        return {
            "tool": self._build_tool(),
            "scenario": scenario.to_dict(),
            "result": result,
            "timing": {"wall_clock_s": wall_clock_s},
        }

    def _build_tool(self) -> Dict[str, str]:
        return {"name": TOOL_NAME, "version": __version__}

    # ------------------------------------------------------------------ explore

    def build_explore_result(self, verdict: Verdict) -> Dict[str, Any]:
        result: Dict[str, Any] = {
            "status": verdict.status.value,
            "states_visited": verdict.states_visited,
            "transitions": verdict.transitions,
        }
        if not verdict.complete:
            return result

        result.update({
            "holds": verdict.holds,
            "all_terminate": verdict.all_terminate,
            "cycle_found": verdict.cycle_found,
            "violation_count": verdict.violation_count,
            "deadlock_count": verdict.deadlock_count,
            "safety_violations": [
                {"property": prop, "length": len(trace)} for trace, prop in verdict.safety_violations
            ],
            "deadlocks": [
                {
                    "length": len(trace),
                    "blocked": {pid: SEMAPHORE_NAMES[state.blocked_on(pid)]
                                for pid in range(len(state.pcs)) if state.blocked_on(pid) is not None},
                    "held": {pid: {SEMAPHORE_NAMES[sid]: count for sid, count in enumerate(row) if count}
                             for pid, row in enumerate(state.held) if any(row)},
                }
                for trace, state in verdict.deadlocks
            ],
            "witnesses": {name: len(trace) for name, trace in sorted(verdict.witnesses.items())},
            "max_bypass": dict(verdict.bypass_stats),
        })
        return result

    # ------------------------------------------------------------------ starvation

    def build_starvation_result(self, horizon: int, trace: Optional[ExecutionTrace], writer: Optional[int],
                                bypass: List[int]) -> Dict[str, Any]:
        if trace is None:
            return {"found": False, "horizon": horizon}
        return {
            "found": True,
            "horizon": horizon,
            "length": len(trace),
            "writer": writer,
            "bypass": bypass,
            "max_bypass": max(bypass) if bypass else 0,
        }

    # ------------------------------------------------------------------ random

    def build_random_result(self, trace: ExecutionTrace, stats: BypassStats) -> Dict[str, Any]:
        entries = sum(1 for s in trace.steps if s.label.kind in (StepKind.ENTER_READ, StepKind.ENTER_WRITE))
        return {
            "seed": trace.seed,
            "steps": len(trace),
            "end_reason": trace.end_reason,
            "violation_count": len(trace.violations),
            "violations": [{"step": index, "property": prop} for index, prop in trace.violations],
            "entries": entries,
            "entries_per_step": entries / len(trace) if len(trace) else 0.0,
            "bypass": stats.per_writer,
            "max_bypass": stats.max_by_writer,
            "overall_max_bypass": stats.overall_max,
            "wait_steps_p99": {pid: _p99(waits) for pid, waits in stats.wait_steps.items()},
        }

    # ------------------------------------------------------------------ bench

    def build_bench_result(self, report: FairnessReport) -> Dict[str, Any]:
        return {
            "elapsed_s": report.elapsed_s,
            "reader_ops": report.reader_ops,
            "writer_ops": report.writer_ops,
            "throughput_ops_s": report.throughput_ops_s,
            "jain_index": report.jain_index,
            "acquisitions": report.acquisitions,
            "events": report.events,
            "exclusion_violations": report.exclusion_violations,
            "flags": report.flags,
            "max_bypass": report.max_bypass,
            "overall_max_bypass": report.overall_max_bypass,
            "writers": _records(report.writer_table()),
        }

    # ------------------------------------------------------------------ tables

    def result_table(self, document: Dict[str, Any]) -> pd.DataFrame:
        """Tabular view of a report for --format csv"""
        mode = document["scenario"]["mode"]
        result = document["result"]
        if mode == "bench":
            return pd.DataFrame(result["writers"],
                                columns=["writer", "windows", "max_bypass", "wait_min_us",
                                         "wait_median_us", "wait_p99_us", "wait_max_us"])
        if mode == "random":
            rows = [
                {
                    "writer": pid,
                    "windows": len(counts),
                    "max_bypass": max(counts) if counts else 0,
                    "wait_steps_p99": result["wait_steps_p99"].get(pid),
                }
                for pid, counts in result["bypass"].items()
            ]
            return pd.DataFrame(rows, columns=["writer", "windows", "max_bypass", "wait_steps_p99"])
        scalars = {key: value for key, value in result.items() if not isinstance(value, (dict, list))}
        return pd.DataFrame([scalars])

    def compare_table(self, first: Dict[str, Any], second: Dict[str, Any]) -> pd.DataFrame:
        """
        Side-by-side numbers for two random or two bench reports.

        Rows: variant, policy, seed, max_bypass, writer_wait_p99, throughput.
        """
        columns = {}
        for name, document in (("A", first), ("B", second)):
            scenario, result = document["scenario"], document["result"]
            if scenario["mode"] == "bench":
                waits = [row["wait_p99_us"] for row in result["writers"] if row["wait_p99_us"] is not None]
                throughput = result["throughput_ops_s"]
            else:
                waits = [w for w in result["wait_steps_p99"].values() if w is not None]
                throughput = result["entries_per_step"]
            columns[name] = {
                "variant": scenario["variant"],
                "policy": scenario["policy"],
                "seed": scenario.get("seed"),
                "max_bypass": result["overall_max_bypass"],
                "writer_wait_p99": max(waits) if waits else None,
                "throughput": throughput,
            }
        table = pd.DataFrame(columns)
        table.index.name = "metric"
        return table.reset_index()

    def generate_compare_report(self, first: Dict[str, Any], second: Dict[str, Any],
                                wall_clock_s: float) -> Dict[str, Any]:
        table = self.compare_table(first, second)
        return {
            "tool": self._build_tool(),
            "scenario": {"a": first["scenario"], "b": second["scenario"]},
            "result": {"rows": _records(table)},
            "timing": {"wall_clock_s": wall_clock_s},
        }
