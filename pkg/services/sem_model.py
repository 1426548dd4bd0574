"""
Semaphore Model - deterministic P/V state machine
Counting semaphores with FIFO-strong or weak wakeup, shared integer registers and the
global system snapshot explored by the model checker. Nothing here ever blocks.
"""

import hashlib
from array import array
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

from services.errors import ModelError


class WakeupPolicy(str, Enum):
    """Order in which a V wakes blocked P callers"""

    FIFO_STRONG = "fifo"
    WEAK = "weak"

    @classmethod
    def parse(cls, text: str) -> "WakeupPolicy":
        for policy in cls:
            if policy.value == text:
                return policy
        raise ValueError(f"unknown wakeup policy {text!r}")


class PResult(str, Enum):
    ACQUIRED = "acquired"
    BLOCKED = "blocked"


class CsMode(str, Enum):
    """Tag of a process inside the shared resource"""

    READ = "R"
    WRITE = "W"


@dataclass(frozen=True)
class SemaphoreState:
    sem_id: int
    value: int
    waiters: Tuple[int, ...] = ()
    policy: WakeupPolicy = WakeupPolicy.FIFO_STRONG


@dataclass(frozen=True)
class RegisterState:
    reg_id: int
    value: int = 0


@dataclass(frozen=True)
class SystemState:
    """
    One node of the explored graph.

    pcs[i] == len(steps of process i) means process i has halted. A process is blocked
    iff it appears in some semaphore's waiters; its pc then stays on the P step.
    held[i][s] counts the permits of semaphore s taken minus returned by process i.
    """

    pcs: Tuple[int, ...]
    iters: Tuple[int, ...]
    sems: Tuple[SemaphoreState, ...]
    regs: Tuple[RegisterState, ...]
    held: Tuple[Tuple[int, ...], ...]
    cs: Tuple[Optional[CsMode], ...]

    def blocked_on(self, pid: int) -> Optional[int]:
        """Semaphore id the process waits on, or None"""
        for sem in self.sems:
            if pid in sem.waiters:
                return sem.sem_id
        return None

    def readers_inside(self) -> int:
        return sum(1 for mode in self.cs if mode is CsMode.READ)

    def writers_inside(self) -> int:
        return sum(1 for mode in self.cs if mode is CsMode.WRITE)


# ============================================================================
# P / V PRIMITIVES
# ============================================================================

def sem_try_p(state: SemaphoreState, pid: int) -> Tuple[PResult, SemaphoreState]:
    """
    Attempt P on a semaphore.

    Args:
        state: Semaphore before the step
        pid: Calling process, must not already be waiting

    Returns:
        (ACQUIRED, state with value - 1) or (BLOCKED, state with pid queued at the back)
    """
    if pid in state.waiters:
        raise ModelError(f"process {pid} is already waiting on semaphore {state.sem_id}")
    assert state.value >= 0, "semaphore value went negative"

    if state.value > 0:
        if state.policy is WakeupPolicy.FIFO_STRONG and state.waiters:
            raise ModelError(f"FIFO semaphore {state.sem_id} has permits and waiters")
        return PResult.ACQUIRED, SemaphoreState(state.sem_id, state.value - 1, state.waiters, state.policy)

    return PResult.BLOCKED, SemaphoreState(state.sem_id, state.value, state.waiters + (pid,), state.policy)


def sem_retry_p(state: SemaphoreState, pid: int) -> SemaphoreState:
    """Weak-semaphore retry: a waiting process grabs an available permit"""
    if state.policy is not WakeupPolicy.WEAK:
        raise ModelError(f"retry on FIFO semaphore {state.sem_id}")
    if pid not in state.waiters:
        raise ModelError(f"process {pid} is not waiting on semaphore {state.sem_id}")
    if state.value <= 0:
        raise ModelError(f"retry on semaphore {state.sem_id} without permits")
    waiters = tuple(w for w in state.waiters if w != pid)
    return SemaphoreState(state.sem_id, state.value - 1, waiters, state.policy)


def sem_v(state: SemaphoreState) -> Tuple[SemaphoreState, Optional[int]]:
    """
    V on a semaphore.

    FIFO_STRONG hands the permit straight to the head waiter (value unchanged).
    WEAK always increments; waiters compete on their next retry.

    Returns:
        (new state, released pid or None)
    """
    assert state.value >= 0, "semaphore value went negative"
    if state.policy is WakeupPolicy.FIFO_STRONG and state.waiters:
        head, rest = state.waiters[0], state.waiters[1:]
        return SemaphoreState(state.sem_id, state.value, rest, state.policy), head
    return SemaphoreState(state.sem_id, state.value + 1, state.waiters, state.policy), None


# ============================================================================
# DIGEST
# ============================================================================

def encode_state(system: SystemState) -> str:
    """
    Canonical text encoding, fields in this fixed order:

        pc:<pcs>|it:<iters>|sem:<id=value/waiters/policy;...>|reg:<id=value;...>|held:<...>|cs:<...>
    """
    sems = ";".join(
        f"{s.sem_id}={s.value}/{'.'.join(str(w) for w in s.waiters)}/{s.policy.value}"
        for s in system.sems
    )
    regs = ";".join(f"{r.reg_id}={r.value}" for r in system.regs)
    held = ";".join(".".join(str(h) for h in row) for row in system.held)
    cs = "".join(mode.value if mode is not None else "-" for mode in system.cs)
    pcs = ",".join(str(pc) for pc in system.pcs)
    iters = ",".join(str(it) for it in system.iters)
    return f"pc:{pcs}|it:{iters}|sem:{sems}|reg:{regs}|held:{held}|cs:{cs}"


def canonical_digest(system: SystemState) -> bytes:
    """16-byte BLAKE2b digest of encode_state(system)"""
    return hashlib.blake2b(encode_state(system).encode("ascii"), digest_size=16).digest()


_CS_CODES = {None: 0, CsMode.READ: 1, CsMode.WRITE: 2}


def state_key(system: SystemState, typecode: str = "i") -> bytes:
    """
    Exact packed encoding used to deduplicate states within one system.

    Injective for states of the same system: every field has a fixed width except the
    waiter queues, which are terminated by -1. Policies are left out since they never
    change. `typecode` is the array item type; "b" is enough while every pc, iteration
    counter, permit count and pid stays below 127.
    """
    fields = list(system.pcs)
    fields.extend(system.iters)
    for sem in system.sems:
        fields.append(sem.value)
        fields.extend(sem.waiters)
        fields.append(-1)
    fields.extend(reg.value for reg in system.regs)
    for row in system.held:
        fields.extend(row)
    fields.extend(_CS_CODES[mode] for mode in system.cs)
    return array(typecode, fields).tobytes()
