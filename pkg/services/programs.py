"""
Process Programs - the reader/writer algorithms as step sequences
Standard (counter based) solution, fair semaphore-only solution and the fair solution
without its writer mutex, built over the semaphore model.
"""

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from services.errors import ConstructionError
from services.sem_model import (
    CsMode,
    RegisterState,
    SemaphoreState,
    SystemState,
    WakeupPolicy,
)

# Semaphore and register ids shared by every variant
MUTEX = 0
ACCESS = 1
NUM = 0

SEMAPHORE_NAMES = {MUTEX: "mutex", ACCESS: "access"}
REGISTER_NAMES = {NUM: "num"}


class StepKind(str, Enum):
    P = "P"
    V = "V"
    REG_ADD = "REG_ADD"
    REG_CHECK_EQ = "REG_CHECK_EQ"
    ENTER_READ = "ENTER_READ"
    EXIT_READ = "EXIT_READ"
    ENTER_WRITE = "ENTER_WRITE"
    EXIT_WRITE = "EXIT_WRITE"
    LOCAL_WORK = "LOCAL_WORK"
    LOOP_BACK = "LOOP_BACK"
    HALT = "HALT"


@dataclass(frozen=True)
class StepLabel:
    """
    One scheduler-visible step.

    target is the semaphore id (P, V) or register id (REG_ADD, REG_CHECK_EQ).
    amount is the REG_ADD delta or the REG_CHECK_EQ literal. REG_CHECK_EQ guards the
    next `skip` steps: they run when the register equals the literal, else are skipped.
    """

    kind: StepKind
    target: Optional[int] = None
    amount: int = 0
    skip: int = 0

    @classmethod
    def p(cls, sem_id: int) -> "StepLabel":
        return cls(StepKind.P, sem_id)

    @classmethod
    def v(cls, sem_id: int) -> "StepLabel":
        return cls(StepKind.V, sem_id)

    @classmethod
    def reg_add(cls, reg_id: int, delta: int) -> "StepLabel":
        return cls(StepKind.REG_ADD, reg_id, delta)

    @classmethod
    def reg_check_eq(cls, reg_id: int, literal: int, skip: int = 1) -> "StepLabel":
        return cls(StepKind.REG_CHECK_EQ, reg_id, literal, skip)

    @classmethod
    def marker(cls, kind: StepKind) -> "StepLabel":
        return cls(kind)

    def __str__(self) -> str:
        if self.kind in (StepKind.P, StepKind.V):
            return f"{self.kind.value}({SEMAPHORE_NAMES.get(self.target, self.target)})"
        if self.kind is StepKind.REG_ADD:
            return f"REG_ADD({REGISTER_NAMES.get(self.target, self.target)},{self.amount:+d})"
        if self.kind is StepKind.REG_CHECK_EQ:
            name = REGISTER_NAMES.get(self.target, self.target)
            return f"REG_CHECK_EQ({name},{self.amount},skip={self.skip})"
        return self.kind.value


ENTER_READ = StepLabel.marker(StepKind.ENTER_READ)
EXIT_READ = StepLabel.marker(StepKind.EXIT_READ)
ENTER_WRITE = StepLabel.marker(StepKind.ENTER_WRITE)
EXIT_WRITE = StepLabel.marker(StepKind.EXIT_WRITE)
LOCAL_WORK = StepLabel.marker(StepKind.LOCAL_WORK)
LOOP_BACK = StepLabel.marker(StepKind.LOOP_BACK)
HALT = StepLabel.marker(StepKind.HALT)

# Steps that carry no synchronization and are dropped when comparing with the runtime
UNOBSERVABLE_KINDS = frozenset({StepKind.LOCAL_WORK, StepKind.LOOP_BACK, StepKind.HALT})


class Role(str, Enum):
    READER = "reader"
    WRITER = "writer"


class Variant(str, Enum):
    STANDARD = "standard"
    FAIR = "fair"
    BROKEN_FAIR_NO_MUTEX = "broken-fair-no-mutex"

    @classmethod
    def parse(cls, text: str) -> "Variant":
        for variant in cls:
            if variant.value == text:
                return variant
        raise ValueError(f"unknown variant {text!r}")


@dataclass(frozen=True)
class ProcessProgram:
    pid: int
    role: Role
    steps: Tuple[StepLabel, ...]
    loop_bound: int

    @property
    def statement_count(self) -> int:
        """Statements of one iteration as the listings write them (guard + guarded step = 1)"""
        guards = sum(1 for step in self.steps if step.kind is StepKind.REG_CHECK_EQ)
        return len(self.steps) - 1 - guards

    def index_of(self, label: StepLabel) -> int:
        """First step index carrying label, -1 if absent"""
        for index, step in enumerate(self.steps):
            if step == label:
                return index
        return -1

    def validate(self) -> None:
        """Static checks run on construction, raising ConstructionError"""
        if self.loop_bound < 1:
            raise ConstructionError("loop_bound", f"must be >= 1, got {self.loop_bound}")
        if not self.steps or self.steps[-1] != HALT:
            raise ConstructionError("steps", "program must end with HALT")
        if any(step == HALT for step in self.steps[:-1]):
            raise ConstructionError("steps", "HALT must be the unique final step")
        if len(self.steps) < 2 or self.steps[-2] != LOOP_BACK:
            raise ConstructionError("steps", "LOOP_BACK must precede HALT")

        body = self.steps[:-2]
        forbidden = StepKind.ENTER_WRITE if self.role is Role.READER else StepKind.ENTER_READ
        if any(step.kind is forbidden for step in body):
            raise ConstructionError("role", f"{self.role.value} program contains {forbidden.value}")

        self._check_nesting(body)
        self._check_balance(body)

    def _check_nesting(self, body: Tuple[StepLabel, ...]) -> None:
        pairs = {StepKind.EXIT_READ: StepKind.ENTER_READ, StepKind.EXIT_WRITE: StepKind.ENTER_WRITE}
        open_kind = None
        for step in body:
            if step.kind in (StepKind.ENTER_READ, StepKind.ENTER_WRITE):
                if open_kind is not None:
                    raise ConstructionError("steps", "nested critical sections")
                open_kind = step.kind
            elif step.kind in pairs:
                if open_kind is not pairs[step.kind]:
                    raise ConstructionError("steps", f"{step.kind.value} without matching enter")
                open_kind = None
        if open_kind is not None:
            raise ConstructionError("steps", "critical section left open at end of iteration")

    def _check_balance(self, body: Tuple[StepLabel, ...]) -> None:
        plain_p, plain_v = Counter(), Counter()
        guarded_p, guarded_v = Counter(), Counter()
        guarded_left = 0
        for step in body:
            if step.kind is StepKind.REG_CHECK_EQ:
                if guarded_left:
                    raise ConstructionError("steps", "guard inside a guarded region")
                guarded_left = step.skip
                continue
            if guarded_left:
                guarded_left -= 1
                if step.kind is StepKind.P:
                    guarded_p[step.target] += 1
                elif step.kind is StepKind.V:
                    guarded_v[step.target] += 1
                else:
                    raise ConstructionError("steps", f"only P/V may be guarded, got {step}")
            elif step.kind is StepKind.P:
                plain_p[step.target] += 1
            elif step.kind is StepKind.V:
                plain_v[step.target] += 1
        if guarded_left:
            raise ConstructionError("steps", "guard runs past the end of the iteration")
        if plain_p != plain_v:
            raise ConstructionError("steps", f"unbalanced P/V: {dict(plain_p)} vs {dict(plain_v)}")
        if guarded_p != guarded_v:
            raise ConstructionError("steps", f"unbalanced guarded P/V: {dict(guarded_p)} vs {dict(guarded_v)}")


def _program(pid: int, role: Role, body: List[StepLabel], loop_bound: int) -> ProcessProgram:
    program = ProcessProgram(pid, role, tuple(body) + (LOOP_BACK, HALT), loop_bound)
    program.validate()
    return program


# ============================================================================
# BUILDERS
# ============================================================================

def build_standard_reader(pid: int, loop_bound: int) -> ProcessProgram:
    """Counter-based reader: the first reader in takes access, the last one out returns it"""
    body = [
        StepLabel.p(MUTEX),
        StepLabel.reg_add(NUM, +1),
        StepLabel.reg_check_eq(NUM, 1),
        StepLabel.p(ACCESS),
        StepLabel.v(MUTEX),
        ENTER_READ,
        LOCAL_WORK,
        EXIT_READ,
        StepLabel.p(MUTEX),
        StepLabel.reg_add(NUM, -1),
        StepLabel.reg_check_eq(NUM, 0),
        StepLabel.v(ACCESS),
        StepLabel.v(MUTEX),
        LOCAL_WORK,
    ]
    return _program(pid, Role.READER, body, loop_bound)


def build_standard_writer(pid: int, loop_bound: int) -> ProcessProgram:
    body = [
        StepLabel.p(ACCESS),
        ENTER_WRITE,
        LOCAL_WORK,
        EXIT_WRITE,
        StepLabel.v(ACCESS),
        LOCAL_WORK,
    ]
    return _program(pid, Role.WRITER, body, loop_bound)


def build_fair_reader(pid: int, loop_bound: int) -> ProcessProgram:
    """A reader takes one of the m access permits"""
    body = [
        StepLabel.p(ACCESS),
        ENTER_READ,
        LOCAL_WORK,
        EXIT_READ,
        StepLabel.v(ACCESS),
        LOCAL_WORK,
    ]
    return _program(pid, Role.READER, body, loop_bound)


def build_fair_writer(pid: int, m: int, loop_bound: int, with_mutex: bool = True) -> ProcessProgram:
    """
    A writer collects all m access permits one P at a time.

    Args:
        pid: Process id
        m: Number of access permits to collect
        loop_bound: Iterations of the outer loop
        with_mutex: Serialize permit collection between writers (False = broken variant)
    """
    if m < 1:
        raise ConstructionError("m", f"must be >= 1, got {m}")
    body: List[StepLabel] = []
    if with_mutex:
        body.append(StepLabel.p(MUTEX))
    body.extend(StepLabel.p(ACCESS) for _ in range(m))
    body.extend([ENTER_WRITE, LOCAL_WORK, EXIT_WRITE])
    body.extend(StepLabel.v(ACCESS) for _ in range(m))
    if with_mutex:
        body.append(StepLabel.v(MUTEX))
    body.append(LOCAL_WORK)
    return _program(pid, Role.WRITER, body, loop_bound)


# ============================================================================
# SYSTEM
# ============================================================================

@dataclass(frozen=True)
class SystemConfig:
    variant: Variant
    m: int
    n: int
    loop_bound: int
    policy: WakeupPolicy = WakeupPolicy.FIFO_STRONG

    def validate(self) -> None:
        if not isinstance(self.variant, Variant):
            raise ConstructionError("variant", f"unknown variant {self.variant!r}")
        if not isinstance(self.policy, WakeupPolicy):
            raise ConstructionError("policy", f"unknown policy {self.policy!r}")
        if self.m < 1:
            raise ConstructionError("m", f"must be >= 1, got {self.m}")
        if self.n < 0:
            raise ConstructionError("n", f"must be >= 0, got {self.n}")
        if self.loop_bound < 1:
            raise ConstructionError("loop_bound", f"must be >= 1, got {self.loop_bound}")

    def initial_permits(self) -> Dict[int, int]:
        access = 1 if self.variant is Variant.STANDARD else self.m
        return {MUTEX: 1, ACCESS: access}


def build_programs(config: SystemConfig) -> List[ProcessProgram]:
    """Readers get pids 0..m-1, writers m..m+n-1"""
    programs = []
    for pid in range(config.m):
        if config.variant is Variant.STANDARD:
            programs.append(build_standard_reader(pid, config.loop_bound))
        else:
            programs.append(build_fair_reader(pid, config.loop_bound))
    for pid in range(config.m, config.m + config.n):
        if config.variant is Variant.STANDARD:
            programs.append(build_standard_writer(pid, config.loop_bound))
        else:
            with_mutex = config.variant is Variant.FAIR
            programs.append(build_fair_writer(pid, config.m, config.loop_bound, with_mutex))
    return programs


def build_system(config: SystemConfig) -> Tuple[SystemState, List[ProcessProgram]]:
    """
    Build the initial state and process programs for a configuration.

    Returns:
        (initial SystemState, programs indexed by pid)
    """
    config.validate()
    programs = build_programs(config)
    permits = config.initial_permits()
    sems = tuple(
        SemaphoreState(sem_id, permits[sem_id], (), config.policy) for sem_id in sorted(permits)
    )
    regs = (RegisterState(NUM, 0),) if config.variant is Variant.STANDARD else ()
    count = len(programs)
    initial = SystemState(
        pcs=(0,) * count,
        iters=(config.loop_bound,) * count,
        sems=sems,
        regs=regs,
        held=tuple((0,) * len(sems) for _ in range(count)),
        cs=(None,) * count,
    )
    return initial, programs


def writer_pids(programs: List[ProcessProgram]) -> List[int]:
    return [p.pid for p in programs if p.role is Role.WRITER]


def reader_pids(programs: List[ProcessProgram]) -> List[int]:
    return [p.pid for p in programs if p.role is Role.READER]


def mode_for(kind: StepKind) -> Optional[CsMode]:
    if kind is StepKind.ENTER_READ:
        return CsMode.READ
    if kind is StepKind.ENTER_WRITE:
        return CsMode.WRITE
    return None
