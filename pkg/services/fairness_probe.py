"""
Fairness Probe - real-thread workload runner for the reader-writer lock
Runs reader and writer threads against an RwFacade for a fixed duration, logs every
synchronization step, and aggregates writer waits, bypass counts, throughput and
Jain's fairness index from that log.
"""

import logging
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from services.errors import ConstructionError, ExclusionViolation
from services.explorer import collect_bypass_stats
from services.programs import StepKind, Variant
from services.rw_lock import ExclusionGauge, LoggedOp, OperationLog, RwFacade
from services.sem_model import WakeupPolicy
from utils import settings

logger = logging.getLogger(__name__)

FLAG_ZERO_DURATION = "zero-duration"
FLAG_NO_WRITERS = "no-writers"
FLAG_LOG_TRUNCATED = "log-truncated"

JOIN_GRACE_S = 5.0


@dataclass(frozen=True)
class WorkloadSpec:
    variant: Variant
    policy: WakeupPolicy
    capacity: int
    reader_threads: int
    writer_threads: int
    hold_us: int
    think_us: int
    duration_ms: int

    def validate(self) -> None:
        if self.capacity < 1:
            raise ConstructionError("capacity", f"must be >= 1, got {self.capacity}")
        for name in ("reader_threads", "writer_threads", "hold_us", "think_us", "duration_ms"):
            value = getattr(self, name)
            if value < 0:
                raise ConstructionError(name, f"must be >= 0, got {value}")

    @property
    def pids(self) -> List[int]:
        return list(range(self.reader_threads + self.writer_threads))

    @property
    def writer_pids(self) -> List[int]:
        """Readers get pids 0..R-1, writers R..R+W-1 (same layout as the model)"""
        return list(range(self.reader_threads, self.reader_threads + self.writer_threads))


@dataclass
class FairnessReport:
    """
    Aggregated outcome of one probe run.

    writer_waits maps each writer to min/median/p99/max wait in microseconds, measured
    from its first P of an acquisition to ENTER_WRITE. A wait still pending when the
    run ends is included up to the last logged event.
    """

    workload: WorkloadSpec
    elapsed_s: float = 0.0
    reader_ops: int = 0
    writer_ops: int = 0
    throughput_ops_s: float = 0.0
    writer_waits: Dict[int, Dict[str, float]] = field(default_factory=dict)
    bypass: Dict[int, List[int]] = field(default_factory=dict)
    max_bypass: Dict[int, int] = field(default_factory=dict)
    acquisitions: Dict[int, int] = field(default_factory=dict)
    jain_index: Optional[float] = None
    events: int = 0
    exclusion_violations: int = 0
    flags: List[str] = field(default_factory=list)

    @property
    def overall_max_bypass(self) -> Optional[int]:
        return max(self.max_bypass.values()) if self.max_bypass else None

    def writer_table(self) -> pd.DataFrame:
        """One row per writer: bypass windows, maximum bypass and wait percentiles"""
        rows = []
        for pid in self.workload.writer_pids:
            waits = self.writer_waits.get(pid, {})
            rows.append({
                "writer": pid,
                "windows": len(self.bypass.get(pid, [])),
                "max_bypass": self.max_bypass.get(pid, 0),
                "wait_min_us": waits.get("min"),
                "wait_median_us": waits.get("median"),
                "wait_p99_us": waits.get("p99"),
                "wait_max_us": waits.get("max"),
            })
        columns = ["writer", "windows", "max_bypass", "wait_min_us", "wait_median_us",
                   "wait_p99_us", "wait_max_us"]
        return pd.DataFrame(rows, columns=columns)


def jains_fairness(values: List[int]) -> Optional[float]:
    """Jain's index: 1.0 when every thread acquired equally often, 1/N when one did all"""
    squares = sum(x ** 2 for x in values)
    if not values or squares == 0:
        return None
    return (sum(values) ** 2) / (len(values) * squares)


def _wait_samples(events: List[LoggedOp], writer_pid: int) -> List[float]:
    samples = []
    started = None
    last_ns = events[-1].t_ns if events else 0
    for op in events:
        if op.pid != writer_pid:
            continue
        if op.label.kind is StepKind.P and started is None:
            started = op.t_ns
        elif op.label.kind is StepKind.ENTER_WRITE and started is not None:
            samples.append((op.t_ns - started) / 1000.0)
            started = None
    if started is not None:
        samples.append((last_ns - started) / 1000.0)
    return samples


def summarize(
    workload: WorkloadSpec,
    log: OperationLog,
    elapsed_s: float,
    exclusion_violations: int = 0,
) -> FairnessReport:
    """Aggregate a finished run; the result depends only on the log and the arguments"""
    events = log.events()
    report = FairnessReport(workload, elapsed_s=elapsed_s, events=len(events),
                            exclusion_violations=exclusion_violations)
    if log.truncated:
        report.flags.append(FLAG_LOG_TRUNCATED)
    if not workload.writer_threads:
        report.flags.append(FLAG_NO_WRITERS)

    entries = Counter(op.pid for op in events
                      if op.label.kind in (StepKind.ENTER_READ, StepKind.ENTER_WRITE))
    writers = set(workload.writer_pids)
    report.acquisitions = {pid: entries.get(pid, 0) for pid in workload.pids}
    report.writer_ops = sum(count for pid, count in report.acquisitions.items() if pid in writers)
    report.reader_ops = sum(count for pid, count in report.acquisitions.items() if pid not in writers)
    if elapsed_s > 0:
        report.throughput_ops_s = (report.reader_ops + report.writer_ops) / elapsed_s
    report.jain_index = jains_fairness(list(report.acquisitions.values()))

    stats = collect_bypass_stats(log.to_trace(), workload.writer_pids)
    report.bypass = stats.per_writer
    report.max_bypass = stats.max_by_writer

    for pid in workload.writer_pids:
        samples = _wait_samples(events, pid)
        if not samples:
            continue
        data = np.asarray(samples)
        report.writer_waits[pid] = {
            "min": float(data.min()),
            "median": float(np.percentile(data, 50)),
            "p99": float(np.percentile(data, 99)),
            "max": float(data.max()),
        }
    return report


def _pause(us: int) -> None:
    if us > 0:
        time.sleep(us / 1_000_000)


def fairness_probe(workload: WorkloadSpec, event_limit: Optional[int] = None) -> FairnessReport:
    """
    Run the workload on real threads and report writer fairness.

    Args:
        workload: Lock shape and thread mix
        event_limit: Events kept in the operation log (defaults to settings.PROBE_EVENT_LIMIT)

    Returns:
        FairnessReport; a zero-duration workload returns an empty report flagged "zero-duration"
    """
    workload.validate()
    if workload.duration_ms == 0:
        logger.warning("⚠️ Zero-duration workload, nothing measured")
        report = FairnessReport(workload, flags=[FLAG_ZERO_DURATION])
        if not workload.writer_threads:
            report.flags.append(FLAG_NO_WRITERS)
        return report

    log = OperationLog(limit=event_limit or settings.PROBE_EVENT_LIMIT)
    gauge = ExclusionGauge(workload.capacity if workload.variant is Variant.FAIR else None)
    lock = RwFacade(workload.variant, workload.capacity, workload.policy, recorder=log, gauge=gauge)
    stop = threading.Event()
    start = threading.Barrier(len(workload.pids) + 1)

    def worker(pid: int, writer: bool) -> None:
        log.bind(pid)
        start.wait()
        try:
            while not stop.is_set():
                guard = lock.acquire_write() if writer else lock.acquire_read()
                with guard:
                    _pause(workload.hold_us)
                _pause(workload.think_us)
        except ExclusionViolation:
            stop.set()

    threads = [
        threading.Thread(target=worker, args=(pid, pid in workload.writer_pids),
                         name=f"probe-{pid}", daemon=True)
        for pid in workload.pids
    ]
    for thread in threads:
        thread.start()

    logger.info(f"🔍 Probing {workload.variant.value}/{workload.policy.value} capacity={workload.capacity} "
                f"readers={workload.reader_threads} writers={workload.writer_threads} "
                f"for {workload.duration_ms} ms")
    start.wait()
    began = time.perf_counter()
    stop.wait(workload.duration_ms / 1000)
    stop.set()
    for thread in threads:
        thread.join(timeout=JOIN_GRACE_S)
        if thread.is_alive():
            logger.warning(f"⚠️ {thread.name} did not finish")
    elapsed = time.perf_counter() - began

    report = summarize(workload, log, elapsed, len(gauge.violations))
    if report.exclusion_violations:
        logger.error(f"❌ Exclusion gauge fired {report.exclusion_violations} times")
    else:
        logger.info(f"✅ {report.reader_ops} reads, {report.writer_ops} writes, "
                    f"max bypass {report.overall_max_bypass}")
    return report
