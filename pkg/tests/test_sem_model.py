import pytest

from services.errors import ModelError
from services.explorer import enabled_moves, step
from services.programs import ACCESS, build_system
from services.sem_model import (
    PResult,
    SemaphoreState,
    SystemState,
    WakeupPolicy,
    canonical_digest,
    encode_state,
    sem_retry_p,
    sem_try_p,
    sem_v,
    state_key,
)


def test_p_acquires_when_permits_available():
    result, sem = sem_try_p(SemaphoreState(0, 2), pid=3)
    assert result is PResult.ACQUIRED
    assert sem.value == 1
    assert sem.waiters == ()


def test_p_blocks_and_queues_at_the_back():
    sem = SemaphoreState(0, 0, waiters=(1,))
    result, sem = sem_try_p(sem, pid=2)
    assert result is PResult.BLOCKED
    assert sem.value == 0
    assert sem.waiters == (1, 2)


def test_p_rejects_a_process_that_is_already_waiting():
    with pytest.raises(ModelError):
        sem_try_p(SemaphoreState(0, 0, waiters=(4,)), pid=4)


def test_fifo_semaphore_never_has_permits_and_waiters():
    with pytest.raises(ModelError):
        sem_try_p(SemaphoreState(0, 1, waiters=(1,)), pid=2)


def test_fifo_v_hands_off_to_the_head_waiter():
    sem, released = sem_v(SemaphoreState(0, 0, waiters=(5, 6)))
    assert released == 5
    assert sem.value == 0
    assert sem.waiters == (6,)


def test_fifo_v_without_waiters_increments():
    sem, released = sem_v(SemaphoreState(0, 0))
    assert released is None
    assert sem.value == 1


def test_weak_v_always_increments():
    sem, released = sem_v(SemaphoreState(0, 0, waiters=(5, 6), policy=WakeupPolicy.WEAK))
    assert released is None
    assert sem.value == 1
    assert sem.waiters == (5, 6)


def test_weak_retry_takes_the_permit_out_of_order():
    sem = SemaphoreState(0, 1, waiters=(5, 6), policy=WakeupPolicy.WEAK)
    sem = sem_retry_p(sem, 6)
    assert sem.value == 0
    assert sem.waiters == (5,)


@pytest.mark.parametrize("sem, pid", [
    (SemaphoreState(0, 1, waiters=(5,)), 5),
    (SemaphoreState(0, 0, waiters=(5,), policy=WakeupPolicy.WEAK), 5),
    (SemaphoreState(0, 1, waiters=(5,), policy=WakeupPolicy.WEAK), 7),
])
def test_retry_preconditions(sem, pid):
    with pytest.raises(ModelError):
        sem_retry_p(sem, pid)


def test_policy_parse():
    assert WakeupPolicy.parse("weak") is WakeupPolicy.WEAK
    with pytest.raises(ValueError):
        WakeupPolicy.parse("lifo")


def test_encoding_of_an_initial_state(make_config):
    state, _ = build_system(make_config("fair", m=1, n=0))
    assert encode_state(state) == "pc:0|it:1|sem:0=1//fifo;1=1//fifo|reg:|held:0.0|cs:-"


def test_standard_encoding_carries_the_reader_counter(make_config):
    state, _ = build_system(make_config("standard", m=1, n=1, policy="weak"))
    assert encode_state(state) == "pc:0,0|it:1,1|sem:0=1//weak;1=1//weak|reg:0=0|held:0.0;0.0|cs:--"


def test_digest_is_16_bytes_and_tracks_state(make_config):
    first, _ = build_system(make_config("fair", m=2, n=1))
    second, _ = build_system(make_config("fair", m=2, n=1))
    other, _ = build_system(make_config("fair", m=2, n=1, loop_bound=2))
    assert len(canonical_digest(first)) == 16
    assert canonical_digest(first) == canonical_digest(second)
    assert canonical_digest(first) != canonical_digest(other)


@pytest.mark.parametrize("policy", [WakeupPolicy.FIFO_STRONG, WakeupPolicy.WEAK])
@pytest.mark.parametrize("value", [0, 1])
@pytest.mark.parametrize("waiters", [(), (9,)])
def test_v_then_p_by_a_lone_process_restores_the_state(policy, value, waiters):
    if policy is WakeupPolicy.FIFO_STRONG and value and waiters:
        pytest.skip("a FIFO semaphore never holds permits and waiters together")
    before = SemaphoreState(0, value, waiters, policy)
    after_v, released = sem_v(before)

    if policy is WakeupPolicy.FIFO_STRONG and waiters:
        # the permit went to the waiter, so the caller has to queue
        assert released == 9
        result, after_p = sem_try_p(after_v, pid=3)
        assert result is PResult.BLOCKED
        assert after_p.waiters == (3,)
        return

    result, after_p = sem_try_p(after_v, pid=3)
    assert result is PResult.ACQUIRED
    assert after_p == before


def test_either_weak_waiter_can_win_the_retry(make_config):
    config = make_config("standard", m=1, n=2, loop_bound=1, policy="weak")
    state, programs = build_system(config)
    for _ in range(4):                       # reader takes mutex, counts itself in, takes access
        state = step(state, 0, programs)
    state = step(state, 1, programs)
    state = step(state, 2, programs)
    assert state.sems[ACCESS].waiters == (1, 2)

    while state.sems[ACCESS].value == 0:     # reader reads and leaves, last one out frees access
        state = step(state, 0, programs)
    assert state.sems[ACCESS].waiters == (1, 2)
    assert {1, 2} <= set(enabled_moves(state, programs))

    first = step(state, 1, programs)
    second = step(state, 2, programs)
    assert first.sems[ACCESS].waiters == (2,)
    assert second.sems[ACCESS].waiters == (1,)
    assert first.held[1][ACCESS] == 1
    assert second.held[2][ACCESS] == 1


def test_state_key_separates_waiter_orders(make_config):
    state, _ = build_system(make_config("fair", m=2, n=1))
    sems = list(state.sems)
    sems[ACCESS] = SemaphoreState(ACCESS, 0, (1, 2))
    first = SystemState(state.pcs, state.iters, tuple(sems), state.regs, state.held, state.cs)
    sems[ACCESS] = SemaphoreState(ACCESS, 0, (2, 1))
    second = SystemState(state.pcs, state.iters, tuple(sems), state.regs, state.held, state.cs)
    assert state_key(first) != state_key(second)
    assert state_key(first, "b") != state_key(second, "b")


def test_state_key_is_stable_across_builds(make_config):
    first, _ = build_system(make_config("standard", m=2, n=1))
    second, _ = build_system(make_config("standard", m=2, n=1))
    assert state_key(first) == state_key(second)
    assert len(state_key(first, "b")) * 4 == len(state_key(first, "i"))
