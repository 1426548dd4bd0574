"""
Reader-Writer Lock Runtime - real threads
Blocking counting semaphores (FIFO ticket queue with direct handoff, or weak wake-one),
the standard and fair reader/writer algorithms behind one facade, an exclusion gauge
and an operation log that speaks the explorer's trace format.
"""

import itertools
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional

from services.errors import ConstructionError, ExclusionViolation, LockUsageError
from services.explorer import ExecutionTrace, TraceStep
from services.programs import (
    ACCESS,
    ENTER_READ,
    ENTER_WRITE,
    EXIT_READ,
    EXIT_WRITE,
    MUTEX,
    NUM,
    StepLabel,
    Variant,
)
from services.sem_model import WakeupPolicy

logger = logging.getLogger(__name__)


# ============================================================================
# OPERATION LOG
# ============================================================================

@dataclass(frozen=True)
class LoggedOp:
    seq: int
    pid: int
    label: StepLabel
    t_ns: int


class OperationLog:
    """
    Thread-safe, totally ordered log of the synchronization steps a lock performs.

    Each thread binds its pid once; unbound threads get pids in order of first use.
    Recording stops (and `truncated` is set) after `limit` events.
    """

    def __init__(self, limit: Optional[int] = None):
        self.limit = limit
        self.truncated = False
        self._lock = threading.Lock()
        self._ops: List[LoggedOp] = []
        self._local = threading.local()
        self._auto_pid = itertools.count()

    def bind(self, pid: int) -> None:
        self._local.pid = pid

    def _pid(self) -> int:
        pid = getattr(self._local, "pid", None)
        if pid is None:
            pid = next(self._auto_pid)
            self._local.pid = pid
        return pid

    def record(self, label: StepLabel) -> None:
        pid = self._pid()
        with self._lock:
            if self.limit is not None and len(self._ops) >= self.limit:
                self.truncated = True
                return
            self._ops.append(LoggedOp(len(self._ops), pid, label, time.perf_counter_ns()))

    def events(self) -> List[LoggedOp]:
        with self._lock:
            return list(self._ops)

    def labels(self, pid: Optional[int] = None) -> List[StepLabel]:
        return [op.label for op in self.events() if pid is None or op.pid == pid]

    def to_trace(self) -> ExecutionTrace:
        """Same line format as explorer traces; digests are None"""
        return ExecutionTrace([TraceStep(op.seq, op.pid, op.label, None) for op in self.events()])


# ============================================================================
# EXCLUSION GAUGE
# ============================================================================

class ExclusionGauge:
    """
    Counts active readers and writers and checks the exclusion invariant on every entry.

    reader_limit, when set, also bounds the number of simultaneous readers. An entry that
    breaks the invariant is recorded, left uncounted and raised; exits only decrement.
    """

    def __init__(self, reader_limit: Optional[int] = None):
        self._lock = threading.Lock()
        self.reader_limit = reader_limit
        self.readers = 0
        self.writers = 0
        self.max_readers = 0
        self.violations: List[ExclusionViolation] = []

    def _violated(self) -> bool:
        over_limit = self.reader_limit is not None and self.readers > self.reader_limit
        return self.writers > 1 or (self.writers == 1 and self.readers > 0) or over_limit

    def _reject(self) -> ExclusionViolation:
        violation = ExclusionViolation(self.readers, self.writers)
        self.violations.append(violation)
        logger.error(f"❌ {violation}")
        return violation

    def enter_read(self) -> None:
        with self._lock:
            self.readers += 1
            if self._violated():
                violation = self._reject()
                self.readers -= 1
                raise violation
            self.max_readers = max(self.max_readers, self.readers)

    def exit_read(self) -> None:
        with self._lock:
            self.readers -= 1

    def enter_write(self) -> None:
        with self._lock:
            self.writers += 1
            if self._violated():
                violation = self._reject()
                self.writers -= 1
                raise violation

    def exit_write(self) -> None:
        with self._lock:
            self.writers -= 1


# ============================================================================
# BLOCKING SEMAPHORE
# ============================================================================

class _Waiter:
    """One blocked FIFO acquirer; granted directly by release()"""

    def __init__(self, ticket: int):
        self.ticket = ticket
        self._event = threading.Event()

    def wait(self) -> None:
        self._event.wait()

    def grant(self) -> None:
        self._event.set()


class BlockingSemaphore:
    """
    Counting semaphore with an explicit wakeup policy.

    FIFO_STRONG: blocked acquirers hold tickets in a queue; release() hands the permit to
    the head waiter without touching the count, so nobody can barge.
    WEAK: permit counter on a Condition; release() increments and wakes one arbitrary
    waiter, newcomers may take the permit first.
    """

    def __init__(self, permits: int, policy: WakeupPolicy = WakeupPolicy.FIFO_STRONG, name: str = "sem"):
        if permits < 0:
            raise ConstructionError("permits", f"must be >= 0, got {permits}")
        self.name = name
        self.policy = policy
        self.initial = permits
        self._permits = permits
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._queue: Deque[_Waiter] = deque()
        self._tickets = itertools.count()
        self._weak_waiting = 0

    @property
    def value(self) -> int:
        with self._lock:
            return self._permits

    @property
    def waiting(self) -> int:
        with self._lock:
            if self.policy is WakeupPolicy.FIFO_STRONG:
                return len(self._queue)
            return self._weak_waiting

    def acquire(self) -> None:
        if self.policy is WakeupPolicy.FIFO_STRONG:
            with self._lock:
                if self._permits > 0 and not self._queue:
                    self._permits -= 1
                    return
                waiter = _Waiter(next(self._tickets))
                self._queue.append(waiter)
            waiter.wait()
            return

        with self._cond:
            self._weak_waiting += 1
            try:
                while self._permits == 0:
                    self._cond.wait()
            finally:
                self._weak_waiting -= 1
            self._permits -= 1

    def release(self) -> None:
        if self.policy is WakeupPolicy.FIFO_STRONG:
            with self._lock:
                if self._queue:
                    self._queue.popleft().grant()
                else:
                    self._permits += 1
            return

        with self._cond:
            self._permits += 1
            self._cond.notify()


# ============================================================================
# FACADE
# ============================================================================

class _Guard:
    """Release handle tied to one acquisition by one thread"""

    def __init__(self, lock: "RwFacade"):
        self._lock = lock
        self._owner = threading.get_ident()
        self._released = False

    def _claim(self) -> None:
        if self._released:
            raise LockUsageError("guard already released")
        if threading.get_ident() != self._owner:
            raise LockUsageError("guard released by a thread that did not acquire it")
        self._released = True

    @property
    def released(self) -> bool:
        return self._released

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if not self._released:
            self.release()
        return False


class ReadGuard(_Guard):
    def release(self) -> None:
        self._claim()
        self._lock._release_read()


class WriteGuard(_Guard):
    def release(self) -> None:
        self._claim()
        self._lock._release_write()


class RwFacade:
    """
    Reader-writer lock running either algorithm on BlockingSemaphores.

    STANDARD: mutex + binary access + reader counter; the first reader in takes access,
    the last one out returns it.
    FAIR: mutex + access with `capacity` permits; a reader takes one permit, a writer
    takes mutex and then collects all permits one blocking P at a time.

    Not reentrant; no upgrade or downgrade.
    """

    def __init__(
        self,
        variant: Variant = Variant.FAIR,
        capacity: int = 1,
        policy: WakeupPolicy = WakeupPolicy.FIFO_STRONG,
        recorder: Optional[OperationLog] = None,
        gauge: Optional[ExclusionGauge] = None,
    ):
        if variant not in (Variant.STANDARD, Variant.FAIR):
            raise ConstructionError("variant", f"runtime supports standard and fair, got {variant.value}")
        if capacity < 1:
            raise ConstructionError("capacity", f"must be >= 1, got {capacity}")
        self.variant = variant
        self.capacity = capacity
        self.policy = policy
        self.recorder = recorder
        self.gauge = gauge
        self._mutex = BlockingSemaphore(1, policy, "mutex")
        self._access = BlockingSemaphore(capacity if variant is Variant.FAIR else 1, policy, "access")
        self._semaphores = {MUTEX: self._mutex, ACCESS: self._access}
        self._num = 0
        self._holders_lock = threading.Lock()
        self._holders = set()

    # ------------------------------------------------------------------ helpers

    def _record(self, label: StepLabel) -> None:
        if self.recorder is not None:
            self.recorder.record(label)

    def _p(self, sem_id: int) -> None:
        self._record(StepLabel.p(sem_id))
        self._semaphores[sem_id].acquire()

    def _v(self, sem_id: int) -> None:
        self._record(StepLabel.v(sem_id))
        self._semaphores[sem_id].release()

    def _enter(self) -> None:
        me = threading.get_ident()
        with self._holders_lock:
            if me in self._holders:
                raise LockUsageError("lock is not reentrant")
            self._holders.add(me)

    def _leave(self) -> None:
        with self._holders_lock:
            self._holders.discard(threading.get_ident())

    def permits(self) -> Dict[str, int]:
        return {sem.name: sem.value for sem in self._semaphores.values()}

    def initial_permits(self) -> Dict[str, int]:
        return {sem.name: sem.initial for sem in self._semaphores.values()}

    # ------------------------------------------------------------------ readers

    def acquire_read(self) -> ReadGuard:
        self._enter()
        try:
            if self.variant is Variant.STANDARD:
                self._p(MUTEX)
                self._num += 1
                self._record(StepLabel.reg_add(NUM, +1))
                self._record(StepLabel.reg_check_eq(NUM, 1))
                if self._num == 1:
                    self._p(ACCESS)
                self._v(MUTEX)
            else:
                self._p(ACCESS)
        except BaseException:
            self._leave()
            raise
        self._record(ENTER_READ)
        if self.gauge is not None:
            try:
                self.gauge.enter_read()
            except ExclusionViolation:
                self._unlock_read()
                self._leave()
                raise
        return ReadGuard(self)

    def release_read(self, guard: ReadGuard) -> None:
        guard.release()

    def _release_read(self) -> None:
        if self.gauge is not None:
            self.gauge.exit_read()
        self._unlock_read()
        self._leave()

    def _unlock_read(self) -> None:
        self._record(EXIT_READ)
        if self.variant is Variant.STANDARD:
            self._p(MUTEX)
            self._num -= 1
            self._record(StepLabel.reg_add(NUM, -1))
            self._record(StepLabel.reg_check_eq(NUM, 0))
            if self._num == 0:
                self._v(ACCESS)
            self._v(MUTEX)
        else:
            self._v(ACCESS)

    # ------------------------------------------------------------------ writers

    def acquire_write(self) -> WriteGuard:
        self._enter()
        try:
            if self.variant is Variant.STANDARD:
                self._p(ACCESS)
            else:
                self._p(MUTEX)
                for _ in range(self.capacity):
                    self._p(ACCESS)
        except BaseException:
            self._leave()
            raise
        self._record(ENTER_WRITE)
        if self.gauge is not None:
            try:
                self.gauge.enter_write()
            except ExclusionViolation:
                self._unlock_write()
                self._leave()
                raise
        return WriteGuard(self)

    def release_write(self, guard: WriteGuard) -> None:
        guard.release()

    def _release_write(self) -> None:
        if self.gauge is not None:
            self.gauge.exit_write()
        self._unlock_write()
        self._leave()

    def _unlock_write(self) -> None:
        self._record(EXIT_WRITE)
        if self.variant is Variant.STANDARD:
            self._v(ACCESS)
        else:
            for _ in range(self.capacity):
                self._v(ACCESS)
            self._v(MUTEX)
