import pytest

from services.errors import ConstructionError
from services.programs import (
    ACCESS,
    ENTER_READ,
    ENTER_WRITE,
    EXIT_READ,
    EXIT_WRITE,
    HALT,
    LOCAL_WORK,
    LOOP_BACK,
    MUTEX,
    ProcessProgram,
    Role,
    StepLabel,
    SystemConfig,
    Variant,
    build_fair_reader,
    build_fair_writer,
    build_programs,
    build_standard_reader,
    build_standard_writer,
    build_system,
    reader_pids,
    writer_pids,
)
from services.sem_model import WakeupPolicy


def test_standard_reader_shape():
    program = build_standard_reader(0, loop_bound=1)
    assert program.statement_count == 13
    assert len(program.steps) == 16
    assert str(program.steps[2]) == "REG_CHECK_EQ(num,1,skip=1)"
    assert program.steps[3] == StepLabel.p(ACCESS)


def test_standard_writer_and_fair_reader_shapes():
    assert build_standard_writer(1, 1).statement_count == 7
    assert build_fair_reader(0, 1).statement_count == 7
    assert len(build_fair_reader(0, 1).steps) == 8


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_fair_writer_collects_every_permit(m):
    program = build_fair_writer(m, m, loop_bound=1)
    assert program.statement_count == 2 * m + 7
    assert len(program.steps) == 2 * m + 8
    assert program.steps[0] == StepLabel.p(MUTEX)
    assert program.steps.count(StepLabel.p(ACCESS)) == m
    assert program.steps.count(StepLabel.v(ACCESS)) == m


def test_broken_writer_has_no_mutex():
    program = build_fair_writer(2, 2, loop_bound=1, with_mutex=False)
    assert program.statement_count == 2 * 2 + 5
    assert StepLabel.p(MUTEX) not in program.steps


def test_fair_writer_rejects_zero_permits():
    with pytest.raises(ConstructionError) as exc:
        build_fair_writer(0, 0, loop_bound=1)
    assert exc.value.field == "m"


def test_labels_render_like_trace_lines():
    assert str(StepLabel.p(ACCESS)) == "P(access)"
    assert str(StepLabel.v(MUTEX)) == "V(mutex)"
    assert str(StepLabel.reg_add(0, -1)) == "REG_ADD(num,-1)"
    assert str(ENTER_WRITE) == "ENTER_WRITE"


@pytest.mark.parametrize("steps, field", [
    ((StepLabel.p(ACCESS), ENTER_READ, EXIT_READ, StepLabel.v(ACCESS), LOOP_BACK), "steps"),
    ((StepLabel.p(ACCESS), ENTER_READ, EXIT_READ, LOOP_BACK, HALT), "steps"),
    ((ENTER_READ, ENTER_READ, EXIT_READ, EXIT_READ, LOOP_BACK, HALT), "steps"),
    ((ENTER_WRITE, EXIT_WRITE, LOOP_BACK, HALT), "role"),
    ((LOCAL_WORK, HALT, LOOP_BACK, HALT), "steps"),
    ((StepLabel.reg_check_eq(0, 1), LOCAL_WORK, LOOP_BACK, HALT), "steps"),
])
def test_invalid_programs_are_rejected(steps, field):
    with pytest.raises(ConstructionError) as exc:
        ProcessProgram(0, Role.READER, steps, loop_bound=1).validate()
    assert exc.value.field == field


def test_loop_bound_must_be_positive():
    with pytest.raises(ConstructionError) as exc:
        build_fair_reader(0, loop_bound=0)
    assert exc.value.field == "loop_bound"


def test_pid_layout_readers_then_writers():
    config = SystemConfig(Variant.FAIR, m=3, n=2, loop_bound=1)
    programs = build_programs(config)
    assert reader_pids(programs) == [0, 1, 2]
    assert writer_pids(programs) == [3, 4]


def test_initial_permits_per_variant():
    assert SystemConfig(Variant.STANDARD, 3, 1, 1).initial_permits()[ACCESS] == 1
    assert SystemConfig(Variant.FAIR, 3, 1, 1).initial_permits()[ACCESS] == 3


def test_build_system_initial_state():
    state, programs = build_system(SystemConfig(Variant.STANDARD, 2, 1, 2, WakeupPolicy.WEAK))
    assert state.pcs == (0, 0, 0)
    assert state.iters == (2, 2, 2)
    assert [sem.value for sem in state.sems] == [1, 1]
    assert all(sem.policy is WakeupPolicy.WEAK for sem in state.sems)
    assert state.regs[0].value == 0
    assert len(programs) == 3


@pytest.mark.parametrize("kwargs, field", [
    ({"m": 0, "n": 1, "loop_bound": 1}, "m"),
    ({"m": 1, "n": -1, "loop_bound": 1}, "n"),
    ({"m": 1, "n": 1, "loop_bound": 0}, "loop_bound"),
])
def test_invalid_configs_name_the_field(kwargs, field):
    with pytest.raises(ConstructionError) as exc:
        build_system(SystemConfig(Variant.FAIR, **kwargs))
    assert exc.value.field == field
