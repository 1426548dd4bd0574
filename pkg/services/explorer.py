"""
Explorer - exhaustive and randomized execution of reader/writer systems
Depth-first interleaving exploration with state deduplication, safety and deadlock
checks, reachability witnesses, directed starvation search and bypass statistics.
"""

import json
import logging
import multiprocessing
import os
from array import array
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.errors import ConstructionError, ModelError, ReplayError
from services.programs import (
    ACCESS,
    ENTER_READ,
    ENTER_WRITE,
    EXIT_READ,
    UNOBSERVABLE_KINDS,
    ProcessProgram,
    StepKind,
    StepLabel,
    SystemConfig,
    build_system,
    mode_for,
    reader_pids,
    writer_pids,
)
from services.sem_model import (
    PResult,
    RegisterState,
    SystemState,
    WakeupPolicy,
    canonical_digest,
    sem_retry_p,
    sem_try_p,
    sem_v,
    state_key,
)
from utils import settings

logger = logging.getLogger(__name__)

MUTUAL_EXCLUSION = "mutual-exclusion"
PERMIT_CONSERVATION = "permit-conservation"

WITNESS_READER_CONCURRENCY = "reader-concurrency"
WITNESS_ALL_HALTED = "all-halted"
WITNESS_DEADLOCK = "deadlock"
WITNESS_MUTUAL_EXCLUSION = "mutual-exclusion-violation"

P_ACCESS = StepLabel.p(ACCESS)

__all__ = [
    "SystemState",
    "TraceStep",
    "ExecutionTrace",
    "ExploreStatus",
    "Verdict",
    "BypassStats",
    "enabled_moves",
    "step",
    "check_state",
    "explore",
    "safety_sweep",
    "find_starvation_schedule",
    "run_random",
    "bypass_count",
    "collect_bypass_stats",
    "replay",
    "fifo_overtakes",
    "observable_steps",
]


# ============================================================================
# TRACES & VERDICTS
# ============================================================================

@dataclass(frozen=True)
class TraceStep:
    index: int
    pid: int
    label: StepLabel
    digest: Optional[str]


@dataclass
class ExecutionTrace:
    steps: List[TraceStep] = field(default_factory=list)
    seed: Optional[int] = None
    end_reason: Optional[str] = None
    violations: List[Tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def prefix(self, length: int) -> "ExecutionTrace":
        """First `length` steps (same seed); end_reason is left unset"""
        kept = [v for v in self.violations if v[0] < length]
        return ExecutionTrace(list(self.steps[:length]), self.seed, None, kept)

    def to_jsonl(self) -> str:
        """One JSON object per step: step, pid, label, digest"""
        lines = [
            json.dumps({"step": s.index, "pid": s.pid, "label": str(s.label), "digest": s.digest})
            for s in self.steps
        ]
        return "".join(line + "\n" for line in lines)

    def write(self, path: Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="ascii")


class ExploreStatus(str, Enum):
    COMPLETE = "complete"
    BUDGET_EXCEEDED = "budget-exceeded"


@dataclass
class Verdict:
    """
    Outcome of an exhaustive exploration.

    violation_count / deadlock_count are exact; the trace lists keep at most
    settings.MAX_RECORDED_FINDINGS examples each. bypass_stats maps each writer to
    the maximum number of reader entries inside one of its bypass windows over all
    paths (None when the state graph has a cycle).
    """

    config: SystemConfig
    status: ExploreStatus
    states_visited: int
    transitions: int
    all_terminate: bool = False
    safety_violations: List[Tuple[ExecutionTrace, str]] = field(default_factory=list)
    deadlocks: List[Tuple[ExecutionTrace, SystemState]] = field(default_factory=list)
    witnesses: Dict[str, ExecutionTrace] = field(default_factory=dict)
    bypass_stats: Dict[int, Optional[int]] = field(default_factory=dict)
    violation_count: int = 0
    deadlock_count: int = 0
    cycle_found: bool = False

    @property
    def complete(self) -> bool:
        return self.status is ExploreStatus.COMPLETE

    @property
    def holds(self) -> bool:
        """True when the run completed without safety violations or deadlocks"""
        return self.complete and self.violation_count == 0 and self.deadlock_count == 0


@dataclass
class BypassStats:
    per_writer: Dict[int, List[int]] = field(default_factory=dict)
    wait_steps: Dict[int, List[int]] = field(default_factory=dict)

    @property
    def max_by_writer(self) -> Dict[int, int]:
        return {pid: max(counts) for pid, counts in self.per_writer.items() if counts}

    @property
    def overall_max(self) -> Optional[int]:
        maxima = self.max_by_writer
        return max(maxima.values()) if maxima else None


# ============================================================================
# STEP SEMANTICS
# ============================================================================

def _waiting_map(state: SystemState) -> Dict[int, int]:
    return {pid: sem.sem_id for sem in state.sems for pid in sem.waiters}


def _enabled(state: SystemState, programs: Sequence[ProcessProgram], waiting: Dict[int, int]) -> List[int]:
    moves = []
    for pid, program in enumerate(programs):
        if state.pcs[pid] >= len(program.steps):
            continue
        sem_id = waiting.get(pid)
        if sem_id is None:
            moves.append(pid)
            continue
        sem = state.sems[sem_id]
        if sem.policy is WakeupPolicy.WEAK and sem.value > 0:
            moves.append(pid)
    return moves


def enabled_moves(state: SystemState, programs: Sequence[ProcessProgram]) -> List[int]:
    """
    Processes that can take a step now, ascending pid.

    A process that is not waiting is always enabled (a P either acquires or enqueues it).
    A waiting process is enabled only under WEAK with a permit available (retry);
    under FIFO_STRONG it moves only through a V handoff.
    """
    return _enabled(state, programs, _waiting_map(state))


def _bump(held: Tuple[Tuple[int, ...], ...], pid: int, sem_id: int, delta: int) -> Tuple[Tuple[int, ...], ...]:
    row = list(held[pid])
    row[sem_id] += delta
    return held[:pid] + (tuple(row),) + held[pid + 1:]


def _put(items: tuple, index: int, value) -> tuple:
    return items[:index] + (value,) + items[index + 1:]


def _apply(
    state: SystemState,
    pid: int,
    programs: Sequence[ProcessProgram],
    waiting: Dict[int, int],
) -> Tuple[SystemState, StepLabel]:
    program = programs[pid]
    pc = state.pcs[pid]
    label = program.steps[pc]
    kind = label.kind
    pcs, iters, sems, regs, held, cs = state.pcs, state.iters, state.sems, state.regs, state.held, state.cs

    if pid in waiting:
        sem_id = waiting[pid]
        sems = _put(sems, sem_id, sem_retry_p(sems[sem_id], pid))
        pcs = _put(pcs, pid, pc + 1)
        held = _bump(held, pid, sem_id, 1)
    elif kind is StepKind.P:
        result, sem = sem_try_p(sems[label.target], pid)
        sems = _put(sems, label.target, sem)
        if result is PResult.ACQUIRED:
            pcs = _put(pcs, pid, pc + 1)
            held = _bump(held, pid, label.target, 1)
    elif kind is StepKind.V:
        sem, released = sem_v(sems[label.target])
        sems = _put(sems, label.target, sem)
        pcs = _put(pcs, pid, pc + 1)
        held = _bump(held, pid, label.target, -1)
        if released is not None:
            # direct handoff: the head waiter moves past its P in the same step
            pcs = _put(pcs, released, pcs[released] + 1)
            held = _bump(held, released, label.target, 1)
    elif kind is StepKind.REG_ADD:
        reg = regs[label.target]
        regs = _put(regs, label.target, RegisterState(reg.reg_id, reg.value + label.amount))
        pcs = _put(pcs, pid, pc + 1)
    elif kind is StepKind.REG_CHECK_EQ:
        taken = regs[label.target].value == label.amount
        pcs = _put(pcs, pid, pc + 1 if taken else pc + 1 + label.skip)
    elif kind in (StepKind.ENTER_READ, StepKind.ENTER_WRITE):
        cs = _put(cs, pid, mode_for(kind))
        pcs = _put(pcs, pid, pc + 1)
    elif kind in (StepKind.EXIT_READ, StepKind.EXIT_WRITE):
        cs = _put(cs, pid, None)
        pcs = _put(pcs, pid, pc + 1)
    elif kind is StepKind.LOCAL_WORK:
        pcs = _put(pcs, pid, pc + 1)
    elif kind is StepKind.LOOP_BACK:
        remaining = iters[pid] - 1
        pcs = _put(pcs, pid, 0 if remaining > 0 else pc + 1)
        iters = _put(iters, pid, remaining)
    elif kind is StepKind.HALT:
        pcs = _put(pcs, pid, len(program.steps))
    else:
        raise ModelError(f"unknown step kind {kind}")

    return SystemState(pcs, iters, sems, regs, held, cs), label


def step(state: SystemState, pid: int, programs: Sequence[ProcessProgram]) -> SystemState:
    """
    Execute exactly one step of process pid.

    Raises:
        ModelError: pid is not enabled in state
    """
    waiting = _waiting_map(state)
    if pid not in _enabled(state, programs, waiting):
        raise ModelError(f"process {pid} is not enabled")
    new_state, _ = _apply(state, pid, programs, waiting)
    return new_state


def check_state(state: SystemState, initial_values: Dict[int, int]) -> List[str]:
    """Safety properties violated by a single state"""
    violated = []
    inside = sum(1 for mode in state.cs if mode is not None)
    if state.writers_inside() and inside > 1:
        violated.append(MUTUAL_EXCLUSION)
    for sem in state.sems:
        held = sum(row[sem.sem_id] for row in state.held)
        initial = initial_values[sem.sem_id]
        if sem.value + held != initial or sem.value > initial:
            violated.append(PERMIT_CONSERVATION)
            break
    return violated


def _halted_pcs(programs: Sequence[ProcessProgram]) -> Tuple[int, ...]:
    return tuple(len(p.steps) for p in programs)


# ============================================================================
# BYPASS WINDOWS
# ============================================================================

@dataclass(frozen=True)
class _Window:
    """A writer's bypass window: from its first P(access) of an iteration to ENTER_WRITE"""

    pid: int
    first_p: int
    enter: int

    def is_open(self, state: SystemState) -> bool:
        pc = state.pcs[self.pid]
        if self.first_p < pc <= self.enter:
            return True
        return pc == self.first_p and self.pid in state.sems[ACCESS].waiters


def _windows(programs: Sequence[ProcessProgram]) -> List[_Window]:
    windows = []
    for pid in writer_pids(list(programs)):
        program = programs[pid]
        windows.append(_Window(pid, program.index_of(P_ACCESS), program.index_of(ENTER_WRITE)))
    return windows


def _bypass_windows(trace: ExecutionTrace, writer_pid: int) -> List[Tuple[int, int]]:
    """(reader entries, steps) per window of writer_pid, the last one possibly still open"""
    windows = []
    entries = None
    opened_at = 0
    for position, s in enumerate(trace.steps):
        if s.pid == writer_pid:
            if s.label == P_ACCESS and entries is None:
                entries, opened_at = 0, position
            elif s.label.kind is StepKind.ENTER_WRITE and entries is not None:
                windows.append((entries, position - opened_at))
                entries = None
        elif s.label.kind is StepKind.ENTER_READ and entries is not None:
            entries += 1
    if entries is not None:
        windows.append((entries, len(trace.steps) - opened_at))
    return windows


def bypass_count(trace: ExecutionTrace, writer_pid: int) -> List[int]:
    """
    Reader entries inside each bypass window of a writer.

    A window opens at the writer's first P(access) of an iteration and closes at its
    ENTER_WRITE (or at the end of the trace). Empty when the writer never executes
    P(access).
    """
    return [entries for entries, _ in _bypass_windows(trace, writer_pid)]


def collect_bypass_stats(trace: ExecutionTrace, writers: Sequence[int]) -> BypassStats:
    stats = BypassStats()
    for pid in writers:
        windows = _bypass_windows(trace, pid)
        stats.per_writer[pid] = [entries for entries, _ in windows]
        stats.wait_steps[pid] = [length for _, length in windows]
    return stats


# ============================================================================
# EXHAUSTIVE EXPLORATION
# ============================================================================

class _Graph:
    """
    Visited states keyed on their packed encoding, with parent links.

    States themselves are not kept: a trace is rebuilt by replaying the chain of moves
    from the initial state, which is only needed for findings.
    """

    def __init__(self, initial: SystemState, programs: Sequence[ProcessProgram], typecode: str):
        self.initial = initial
        self.programs = programs
        self.typecode = typecode
        self.index: Dict[bytes, int] = {state_key(initial, typecode): 0}
        self.parents = array("q", [-1])
        self.moves = array("h", [-1])

    def __len__(self) -> int:
        return len(self.parents)

    def intern(self, state: SystemState, parent: int, pid: int) -> Tuple[int, bool]:
        key = state_key(state, self.typecode)
        sid = self.index.get(key)
        if sid is not None:
            return sid, False
        sid = len(self.parents)
        self.index[key] = sid
        self.parents.append(parent)
        self.moves.append(pid)
        return sid, True

    def trace_to(self, sid: int) -> ExecutionTrace:
        pids = []
        while self.parents[sid] >= 0:
            pids.append(self.moves[sid])
            sid = self.parents[sid]
        pids.reverse()
        state = self.initial
        steps = []
        for i, pid in enumerate(pids):
            state, label = _apply(state, pid, self.programs, _waiting_map(state))
            steps.append(TraceStep(i, pid, label, canonical_digest(state).hex()))
        return ExecutionTrace(steps)


def _key_typecode(config: SystemConfig, programs: Sequence[ProcessProgram]) -> str:
    widest = max(config.loop_bound, config.m + config.n, max(len(p.steps) for p in programs))
    return "b" if widest < 127 else "i"


_NEW, _ON_STACK, _DONE = 0, 1, 2


def explore(config: SystemConfig, budget: Optional[int] = None) -> Verdict:
    """
    Visit every reachable state of a bounded system exactly once.

    Children are explored in ascending pid order, so two runs on the same config give
    identical verdicts.

    Args:
        config: System to explore
        budget: Maximum number of distinct states (defaults to settings.STATE_BUDGET)

    Returns:
        Verdict; status BUDGET_EXCEEDED (with counts only) when the budget is hit
    """
    budget = budget or settings.STATE_BUDGET
    initial, programs = build_system(config)
    initial_values = {sem.sem_id: sem.value for sem in initial.sems}
    halted = _halted_pcs(programs)
    windows = _windows(programs)
    limit = settings.MAX_RECORDED_FINDINGS

    logger.info(f"🔍 Exploring {config.variant.value} m={config.m} n={config.n} "
                f"bound={config.loop_bound} policy={config.policy.value}")

    graph = _Graph(initial, programs, _key_typecode(config, programs))
    status = bytearray([_NEW])
    # per window: longest reader run still reachable inside an open window from each state
    cont = [array("l", [0]) for _ in windows]
    best = [0] * len(windows)
    verdict = Verdict(config, ExploreStatus.COMPLETE, states_visited=1, transitions=0)

    def examine(sid: int, state: SystemState) -> Tuple[List[int], Dict[int, int]]:
        for prop in check_state(state, initial_values):
            verdict.violation_count += 1
            if len(verdict.safety_violations) < limit:
                verdict.safety_violations.append((graph.trace_to(sid), prop))
            if prop == MUTUAL_EXCLUSION and WITNESS_MUTUAL_EXCLUSION not in verdict.witnesses:
                verdict.witnesses[WITNESS_MUTUAL_EXCLUSION] = graph.trace_to(sid)
        if state.readers_inside() >= 2 and WITNESS_READER_CONCURRENCY not in verdict.witnesses:
            verdict.witnesses[WITNESS_READER_CONCURRENCY] = graph.trace_to(sid)
        waiting = _waiting_map(state)
        moves = _enabled(state, programs, waiting)
        if not moves:
            if state.pcs == halted:
                if WITNESS_ALL_HALTED not in verdict.witnesses:
                    verdict.witnesses[WITNESS_ALL_HALTED] = graph.trace_to(sid)
            else:
                verdict.deadlock_count += 1
                if len(verdict.deadlocks) < limit:
                    verdict.deadlocks.append((graph.trace_to(sid), state))
                if WITNESS_DEADLOCK not in verdict.witnesses:
                    verdict.witnesses[WITNESS_DEADLOCK] = graph.trace_to(sid)
        return moves, waiting

    def absorb(frame: list, inc: Tuple[int, ...], child: int) -> None:
        acc = frame[4]
        for k in range(len(windows)):
            value = inc[k] + cont[k][child]
            if value > acc[k]:
                acc[k] = value

    # frame: [sid, moves, next move, waiting, acc per window, inc of the edge being explored, state]
    moves, waiting = examine(0, initial)
    stack = [[0, moves, 0, waiting, [0] * len(windows), None, initial]]
    status[0] = _ON_STACK

    while stack:
        frame = stack[-1]
        sid, moves, i, waiting, state = frame[0], frame[1], frame[2], frame[3], frame[6]
        if i < len(moves):
            frame[2] = i + 1
            pid = moves[i]
            child, label = _apply(state, pid, programs, waiting)
            verdict.transitions += 1
            entering = label.kind is StepKind.ENTER_READ
            inc = tuple(1 if entering and w.is_open(state) else 0 for w in windows)
            cid, new = graph.intern(child, sid, pid)
            if new:
                if len(graph) > budget:
                    logger.warning(f"⚠️ State budget of {budget} exceeded")
                    return Verdict(config, ExploreStatus.BUDGET_EXCEEDED,
                                   states_visited=len(graph), transitions=verdict.transitions)
                status.append(_ON_STACK)
                for column in cont:
                    column.append(0)
                child_moves, child_waiting = examine(cid, child)
                frame[5] = inc
                stack.append([cid, child_moves, 0, child_waiting, [0] * len(windows), None, child])
            elif status[cid] == _ON_STACK:
                verdict.cycle_found = True
            else:
                absorb(frame, inc, cid)
            continue

        stack.pop()
        status[sid] = _DONE
        for k, w in enumerate(windows):
            value = frame[4][k] if w.is_open(state) else 0
            cont[k][sid] = value
            if value > best[k]:
                best[k] = value
        if stack:
            parent = stack[-1]
            absorb(parent, parent[5], sid)

    verdict.states_visited = len(graph)
    verdict.all_terminate = verdict.deadlock_count == 0 and not verdict.cycle_found
    for k, w in enumerate(windows):
        verdict.bypass_stats[w.pid] = None if verdict.cycle_found else best[k]

    logger.info(f"✅ Explored {verdict.states_visited} states, {verdict.transitions} transitions, "
                f"{verdict.violation_count} violations, {verdict.deadlock_count} deadlocks")
    return verdict


def _sweep_cost(config: SystemConfig) -> Tuple[int, ...]:
    return (config.m + config.n, config.loop_bound, config.n, config.m)


def safety_sweep(
    configs: Sequence[SystemConfig],
    workers: Optional[int] = None,
    budget: Optional[int] = None,
) -> List[Verdict]:
    """
    Explore many independent systems, one worker process per system at a time.

    The largest systems are dispatched first. Every exploration is still single threaded,
    so each verdict equals explore(config, budget).

    Args:
        configs: Systems to explore
        workers: Process count (defaults to the CPU count)
        budget: State budget per system

    Returns:
        One verdict per config, in input order
    """
    order = sorted(range(len(configs)), key=lambda i: _sweep_cost(configs[i]), reverse=True)
    workers = max(1, min(workers or os.cpu_count() or 1, len(configs)))
    logger.info(f"🔍 Sweeping {len(configs)} systems on {workers} workers")
    if workers == 1:
        results = [explore(configs[i], budget) for i in order]
    else:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(partial(explore, budget=budget), [configs[i] for i in order], chunksize=1)
    verdicts: List[Optional[Verdict]] = [None] * len(configs)
    for i, verdict in zip(order, results):
        verdicts[i] = verdict
    return verdicts


# ============================================================================
# DIRECTED STARVATION SEARCH
# ============================================================================

def find_starvation_schedule(
    config: SystemConfig,
    horizon: int,
    node_budget: Optional[int] = None,
) -> Optional[ExecutionTrace]:
    """
    Search for a schedule that keeps the first writer blocked on access while readers
    keep entering.

    Phase 1 runs readers until one is reading, phase 2 runs the writer until it blocks
    on access, phase 3 runs readers only and accepts a move only if the writer is still
    blocked on access afterwards (entry moves first, then lowest pid, backtracking on
    dead ends).

    Args:
        config: System shape; loop_bound is raised so loops never run out in the horizon
        horizon: Minimum trace length to reach
        node_budget: Phase-3 search nodes before giving up

    Returns:
        The schedule, or None when the writer cannot be kept blocked
    """
    if config.n < 1:
        raise ConstructionError("n", "starvation search needs at least one writer")
    if horizon < 1:
        raise ConstructionError("horizon", f"must be >= 1, got {horizon}")
    node_budget = node_budget or settings.STARVATION_NODE_BUDGET

    search = replace(config, loop_bound=max(config.loop_bound, horizon + 1))
    state, programs = build_system(search)
    readers = set(reader_pids(programs))
    writer = writer_pids(programs)[0]
    enter_at = {pid: programs[pid].index_of(ENTER_READ) for pid in readers}
    exit_at = {pid: programs[pid].index_of(EXIT_READ) for pid in readers}
    path: List[Tuple[int, StepLabel, SystemState]] = []

    def advance(current: SystemState, pid: int) -> SystemState:
        child, label = _apply(current, pid, programs, _waiting_map(current))
        path.append((pid, label, child))
        return child

    for _ in range(sum(len(p.steps) for p in programs)):
        if state.readers_inside():
            break
        moves = [pid for pid in enabled_moves(state, programs) if pid in readers]
        if not moves:
            return None
        state = advance(state, moves[0])
    else:
        return None

    for _ in range(2 * len(programs[writer].steps)):
        if state.blocked_on(writer) == ACCESS:
            break
        if writer not in enabled_moves(state, programs):
            return None
        if programs[writer].steps[state.pcs[writer]] == ENTER_WRITE:
            return None
        state = advance(state, writer)
    else:
        return None

    def priority(current: SystemState, pid: int) -> int:
        pc = current.pcs[pid]
        return 1 if enter_at[pid] < pc <= exit_at[pid] else 0

    def candidates(current: SystemState) -> list:
        waiting = _waiting_map(current)
        options = []
        for pid in _enabled(current, programs, waiting):
            if pid not in readers:
                continue
            child, label = _apply(current, pid, programs, waiting)
            if child.blocked_on(writer) != ACCESS:
                continue
            options.append((priority(current, pid), pid, child, label))
        options.sort(key=lambda option: (option[0], option[1]))
        return options

    frames = [[candidates(state), 0]]
    nodes = 0
    while len(path) < horizon:
        if not frames:
            logger.info(f"Writer {writer} cannot be kept blocked ({config.variant.value}, "
                        f"{config.policy.value})")
            return None
        options, i = frames[-1]
        if i >= len(options):
            frames.pop()
            if frames:
                path.pop()
            continue
        frames[-1][1] = i + 1
        nodes += 1
        if nodes > node_budget:
            logger.warning(f"⚠️ Starvation search gave up after {node_budget} nodes")
            return None
        _, pid, child, label = options[i]
        path.append((pid, label, child))
        frames.append([candidates(child), 0])

    steps = [
        TraceStep(i, pid, label, canonical_digest(after).hex())
        for i, (pid, label, after) in enumerate(path)
    ]
    trace = ExecutionTrace(steps, end_reason="horizon")
    logger.info(f"✅ Starvation schedule of {len(trace)} steps, writer {writer} bypassed "
                f"{bypass_count(trace, writer)} times")
    return trace


# ============================================================================
# RANDOM RUNS
# ============================================================================

def run_random(config: SystemConfig, seed: int, max_steps: int) -> Tuple[ExecutionTrace, BypassStats]:
    """
    Uniformly random schedule drawn from numpy's PCG64 generator seeded with `seed`.

    Returns:
        (trace, bypass statistics of every writer)
    """
    state, programs = build_system(config)
    initial_values = {sem.sem_id: sem.value for sem in state.sems}
    halted = _halted_pcs(programs)
    rng = np.random.default_rng(seed)
    trace = ExecutionTrace(seed=seed)

    moves: List[int] = []
    for index in range(max_steps):
        waiting = _waiting_map(state)
        moves = _enabled(state, programs, waiting)
        if not moves:
            break
        pid = moves[int(rng.integers(len(moves)))]
        state, label = _apply(state, pid, programs, waiting)
        trace.steps.append(TraceStep(index, pid, label, canonical_digest(state).hex()))
        for prop in check_state(state, initial_values):
            trace.violations.append((index, prop))

    if state.pcs == halted:
        trace.end_reason = "halted"
    elif not enabled_moves(state, programs):
        trace.end_reason = "deadlock"
    else:
        trace.end_reason = "max_steps"

    return trace, collect_bypass_stats(trace, writer_pids(programs))


# ============================================================================
# REPLAY & TRACE CHECKS
# ============================================================================

def replay(config: SystemConfig, trace: ExecutionTrace) -> SystemState:
    """
    Re-execute a trace from the initial state and check every recorded digest.

    Raises:
        ReplayError: a step is not enabled, carries the wrong label or digest
    """
    state, programs = build_system(config)
    for position, s in enumerate(trace.steps):
        waiting = _waiting_map(state)
        if s.pid not in _enabled(state, programs, waiting):
            raise ReplayError(position, s.digest or "", None)
        state, label = _apply(state, s.pid, programs, waiting)
        if label != s.label:
            raise ReplayError(position, str(s.label), str(label))
        actual = canonical_digest(state).hex()
        if s.digest is not None and actual != s.digest:
            raise ReplayError(position, s.digest, actual)
    return state


def fifo_overtakes(config: SystemConfig, trace: ExecutionTrace) -> List[Tuple[int, int, int]]:
    """
    Replay a trace and list (sem id, released pid, overtaken head) for every FIFO
    semaphore that released a waiter other than its longest-waiting one.
    """
    state, programs = build_system(config)
    overtakes = []
    for s in trace.steps:
        after = step(state, s.pid, programs)
        for before_sem, after_sem in zip(state.sems, after.sems):
            if before_sem.policy is not WakeupPolicy.FIFO_STRONG:
                continue
            left = [pid for pid in before_sem.waiters if pid not in after_sem.waiters]
            for pid in left:
                if before_sem.waiters.index(pid) != 0:
                    overtakes.append((before_sem.sem_id, pid, before_sem.waiters[0]))
        state = after
    return overtakes


def observable_steps(config: SystemConfig, pid: int) -> List[StepLabel]:
    """
    Synchronization steps of one process run alone from the initial state
    (LOCAL_WORK, LOOP_BACK and HALT dropped).
    """
    state, programs = build_system(config)
    program = programs[pid]
    labels = []
    while state.pcs[pid] < len(program.steps):
        if pid not in enabled_moves(state, programs):
            raise ModelError(f"process {pid} blocks when run alone")
        label = program.steps[state.pcs[pid]]
        state = step(state, pid, programs)
        if label.kind not in UNOBSERVABLE_KINDS:
            labels.append(label)
    return labels
