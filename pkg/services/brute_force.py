"""
Brute Force Enumerator - independent oracle for the explorer
Its own interpreter over plain tuples, breadth-first, keyed on full states (no digests).
Only meant for small instances: the explorer's verdicts are cross-checked against it.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterator, List, Tuple

from services.programs import ProcessProgram, StepKind, SystemConfig, Variant, build_programs

logger = logging.getLogger(__name__)

# state = (pcs, iters, sems ((value, waiters), ...), regs, held (flat), cs ('', 'R', 'W'))
State = Tuple[tuple, tuple, tuple, tuple, tuple, tuple]


@dataclass(frozen=True)
class OracleResult:
    states: int
    transitions: int
    violations: int
    deadlocks: int
    all_terminate: bool


class BruteForceEnumerator:
    """Enumerates every reachable state of a system configuration"""

    def __init__(self, config: SystemConfig):
        config.validate()
        self.config = config
        self.programs: List[ProcessProgram] = build_programs(config)
        self.permits = config.initial_permits()
        self.sem_count = len(self.permits)
        self.weak = config.policy.value == "weak"

    def initial(self) -> State:
        count = len(self.programs)
        sems = tuple((self.permits[sid], ()) for sid in range(self.sem_count))
        regs = (0,) if self.config.variant is Variant.STANDARD else ()
        return (
            (0,) * count,
            (self.config.loop_bound,) * count,
            sems,
            regs,
            (0,) * (count * self.sem_count),
            ("",) * count,
        )

    def successors(self, state: State) -> Iterator[State]:
        pcs = state[0]
        sems = state[2]
        waiting: Dict[int, int] = {}
        for sid, (_, waiters) in enumerate(sems):
            for pid in waiters:
                waiting[pid] = sid
        for pid, program in enumerate(self.programs):
            if pcs[pid] == len(program.steps):
                continue
            if pid in waiting:
                sid = waiting[pid]
                if self.weak and sems[sid][0] > 0:
                    yield self._retry(state, pid, sid)
                continue
            yield self._fire(state, pid)

    def _retry(self, state: State, pid: int, sid: int) -> State:
        pcs, iters, sems, regs, held, cs = (list(part) for part in state)
        value, waiters = sems[sid]
        sems[sid] = (value - 1, tuple(w for w in waiters if w != pid))
        held[pid * self.sem_count + sid] += 1
        pcs[pid] += 1
        return tuple(pcs), tuple(iters), tuple(sems), tuple(regs), tuple(held), tuple(cs)

    def _fire(self, state: State, pid: int) -> State:
        pcs, iters, sems, regs, held, cs = (list(part) for part in state)
        program = self.programs[pid]
        label = program.steps[pcs[pid]]
        kind = label.kind

        if kind is StepKind.P:
            value, waiters = sems[label.target]
            if value > 0:
                sems[label.target] = (value - 1, waiters)
                held[pid * self.sem_count + label.target] += 1
                pcs[pid] += 1
            else:
                sems[label.target] = (value, waiters + (pid,))
        elif kind is StepKind.V:
            value, waiters = sems[label.target]
            held[pid * self.sem_count + label.target] -= 1
            pcs[pid] += 1
            if waiters and not self.weak:
                head = waiters[0]
                sems[label.target] = (value, waiters[1:])
                held[head * self.sem_count + label.target] += 1
                pcs[head] += 1
            else:
                sems[label.target] = (value + 1, waiters)
        elif kind is StepKind.REG_ADD:
            regs[label.target] += label.amount
            pcs[pid] += 1
        elif kind is StepKind.REG_CHECK_EQ:
            pcs[pid] += 1 if regs[label.target] == label.amount else 1 + label.skip
        elif kind is StepKind.ENTER_READ:
            cs[pid] = "R"
            pcs[pid] += 1
        elif kind is StepKind.ENTER_WRITE:
            cs[pid] = "W"
            pcs[pid] += 1
        elif kind in (StepKind.EXIT_READ, StepKind.EXIT_WRITE):
            cs[pid] = ""
            pcs[pid] += 1
        elif kind is StepKind.LOCAL_WORK:
            pcs[pid] += 1
        elif kind is StepKind.LOOP_BACK:
            iters[pid] -= 1
            pcs[pid] = 0 if iters[pid] > 0 else pcs[pid] + 1
        elif kind is StepKind.HALT:
            pcs[pid] = len(program.steps)
        return tuple(pcs), tuple(iters), tuple(sems), tuple(regs), tuple(held), tuple(cs)

    def violations(self, state: State) -> int:
        count = 0
        cs = state[5]
        if "W" in cs and sum(1 for mode in cs if mode) > 1:
            count += 1
        held = state[4]
        for sid, (value, _) in enumerate(state[2]):
            total = sum(held[pid * self.sem_count + sid] for pid in range(len(self.programs)))
            if value + total != self.permits[sid] or value > self.permits[sid]:
                count += 1
                break
        return count

    def run(self) -> OracleResult:
        start = self.initial()
        final_pcs = tuple(len(p.steps) for p in self.programs)
        seen = {start}
        queue = deque([start])
        graph: Dict[State, List[State]] = {}
        transitions = violations = deadlocks = 0

        while queue:
            state = queue.popleft()
            children = list(self.successors(state))
            graph[state] = children
            transitions += len(children)
            violations += self.violations(state)
            if not children and state[0] != final_pcs:
                deadlocks += 1
            for child in children:
                if child not in seen:
                    seen.add(child)
                    queue.append(child)

        acyclic = _is_acyclic(graph)
        logger.info(f"Oracle: {len(seen)} states, {transitions} transitions")
        return OracleResult(len(seen), transitions, violations, deadlocks, deadlocks == 0 and acyclic)


def _is_acyclic(graph: Dict[State, List[State]]) -> bool:
    """Kahn's algorithm over the reachable graph"""
    indegree = {state: 0 for state in graph}
    for children in graph.values():
        for child in children:
            indegree[child] += 1
    ready = deque(state for state, degree in indegree.items() if degree == 0)
    removed = 0
    while ready:
        state = ready.popleft()
        removed += 1
        for child in graph[state]:
            indegree[child] -= 1
            if indegree[child] == 0:
                ready.append(child)
    return removed == len(graph)


def enumerate_states(config: SystemConfig) -> OracleResult:
    return BruteForceEnumerator(config).run()
