import time
from dataclasses import replace
from itertools import product

import pytest

from services.errors import ConstructionError, ModelError, ReplayError
from services.explorer import (
    WITNESS_ALL_HALTED,
    WITNESS_DEADLOCK,
    WITNESS_READER_CONCURRENCY,
    ExecutionTrace,
    ExploreStatus,
    TraceStep,
    bypass_count,
    collect_bypass_stats,
    enabled_moves,
    explore,
    fifo_overtakes,
    find_starvation_schedule,
    observable_steps,
    replay,
    run_random,
    safety_sweep,
    step,
)
from services.programs import (
    ACCESS,
    ENTER_READ,
    ENTER_WRITE,
    EXIT_WRITE,
    MUTEX,
    StepLabel,
    SystemConfig,
    Variant,
    build_system,
)
from services.sem_model import WakeupPolicy, canonical_digest
from utils import settings


# ---------------------------------------------------------------- exhaustive

def test_single_reader_state_count(make_config):
    verdict = explore(make_config("fair", m=1, n=0, loop_bound=1))
    assert verdict.status is ExploreStatus.COMPLETE
    assert verdict.states_visited == 9
    assert verdict.transitions == 8
    assert verdict.all_terminate
    assert verdict.holds
    assert WITNESS_ALL_HALTED in verdict.witnesses


def test_golden_state_counts(make_config, golden_counts):
    for entry in golden_counts:
        config = make_config(entry["variant"], entry["m"], entry["n"], entry["loop_bound"], entry["policy"])
        verdict = explore(config)
        assert (verdict.states_visited, verdict.transitions) == (entry["states"], entry["transitions"]), entry


def test_fair_solution_holds_with_two_writers(make_config):
    verdict = explore(make_config("fair", m=2, n=2, loop_bound=1))
    assert verdict.holds
    assert verdict.deadlock_count == 0
    assert verdict.violation_count == 0
    assert verdict.all_terminate
    assert not verdict.cycle_found


def test_writers_without_mutex_deadlock(make_config):
    config = make_config("broken-fair-no-mutex", m=2, n=2, loop_bound=1)
    verdict = explore(config)
    assert verdict.deadlock_count >= 1
    assert not verdict.all_terminate
    assert not verdict.holds
    assert WITNESS_DEADLOCK in verdict.witnesses

    halves = [state for _, state in verdict.deadlocks
              if state.held[2][ACCESS] == 1 and state.held[3][ACCESS] == 1]
    assert halves, "expected a deadlock where each writer holds one access permit"

    for trace, state in verdict.deadlocks:
        final = replay(config, trace)
        assert final == state
        assert canonical_digest(final).hex() == trace.steps[-1].digest
        assert enabled_moves(final, build_system(config)[1]) == []


def test_two_readers_read_together(make_config):
    config = make_config("fair", m=2, n=1, loop_bound=1)
    verdict = explore(config)
    witness = verdict.witnesses[WITNESS_READER_CONCURRENCY]
    assert replay(config, witness).readers_inside() == 2


def test_standard_solution_lets_readers_overlap(make_config):
    verdict = explore(make_config("standard", m=2, n=1, loop_bound=1))
    assert verdict.holds
    assert WITNESS_READER_CONCURRENCY in verdict.witnesses
    assert verdict.bypass_stats[2] >= 1


@pytest.mark.parametrize("variant", ["standard", "fair"])
@pytest.mark.parametrize("policy", ["fifo", "weak"])
def test_small_instances_are_safe(make_config, variant, policy):
    verdict = explore(make_config(variant, m=2, n=1, loop_bound=1, policy=policy))
    assert verdict.violation_count == 0
    assert verdict.deadlock_count == 0


def test_sweep_matches_single_explorations(make_config):
    configs = [
        make_config("fair", m=2, n=1),
        make_config("standard", m=1, n=1, policy="weak"),
        make_config("broken-fair-no-mutex", m=2, n=2),
    ]
    verdicts = safety_sweep(configs, workers=2)
    assert [v.config for v in verdicts] == configs
    for config, verdict in zip(configs, verdicts):
        single = explore(config)
        assert (verdict.states_visited, verdict.transitions) == (single.states_visited, single.transitions)
        assert verdict.deadlock_count == single.deadlock_count
        assert verdict.bypass_stats == single.bypass_stats


SWEEP = list(product(["standard", "fair"], ["fifo", "weak"], [1, 2, 3], [0, 1, 2], [1, 2]))


@pytest.fixture(scope="module")
def sweep_run():
    configs = [SystemConfig(Variant.parse(variant), m, n, bound, WakeupPolicy.parse(policy))
               for variant, policy, m, n, bound in SWEEP]
    started = time.perf_counter()
    verdicts = safety_sweep(configs)
    return dict(zip(SWEEP, verdicts)), time.perf_counter() - started


@pytest.mark.stress
@pytest.mark.parametrize("variant, policy, m, n, bound", SWEEP)
def test_sweep_instance_is_safe(sweep_run, variant, policy, m, n, bound):
    verdict = sweep_run[0][(variant, policy, m, n, bound)]
    assert verdict.complete
    assert verdict.violation_count == 0
    assert verdict.deadlock_count == 0
    assert verdict.all_terminate


@pytest.mark.stress
def test_sweep_fits_the_time_budget(sweep_run):
    _, elapsed = sweep_run
    assert elapsed < settings.SWEEP_TIME_BUDGET_S


def test_budget_exceeded_reports_counts_only(make_config):
    verdict = explore(make_config("fair", m=2, n=2, loop_bound=1), budget=10)
    assert verdict.status is ExploreStatus.BUDGET_EXCEEDED
    assert verdict.states_visited > 10
    assert verdict.safety_violations == []
    assert verdict.deadlocks == []
    assert verdict.witnesses == {}


def test_exploration_is_deterministic(make_config):
    config = make_config("broken-fair-no-mutex", m=2, n=2, loop_bound=1)
    first, second = explore(config), explore(config)
    assert first.states_visited == second.states_visited
    assert first.transitions == second.transitions
    assert [t.to_jsonl() for t, _ in first.deadlocks] == [t.to_jsonl() for t, _ in second.deadlocks]
    assert first.bypass_stats == second.bypass_stats


def test_exact_bypass_bounds_every_random_run(make_config):
    config = make_config("standard", m=2, n=1, loop_bound=2)
    verdict = explore(config)
    exact = verdict.bypass_stats[2]
    assert exact is not None
    for seed in range(50):
        trace, stats = run_random(config, seed, max_steps=500)
        assert stats.max_by_writer.get(2, 0) <= exact


# ---------------------------------------------------------------- stepping & replay

def test_blocked_fifo_process_cannot_step(make_config):
    config = make_config("fair", m=1, n=1, loop_bound=1)
    state, programs = build_system(config)
    state = step(state, 0, programs)          # reader takes the only permit
    state = step(state, 1, programs)          # writer P(mutex)
    state = step(state, 1, programs)          # writer blocks on access
    assert state.blocked_on(1) == ACCESS
    assert 1 not in enabled_moves(state, programs)
    with pytest.raises(ModelError):
        step(state, 1, programs)


def test_replay_rejects_a_tampered_digest(make_config):
    config = make_config("fair", m=2, n=1, loop_bound=1)
    trace, _ = run_random(config, seed=3, max_steps=20)
    steps = list(trace.steps)
    steps[5] = TraceStep(5, steps[5].pid, steps[5].label, "00" * 16)
    with pytest.raises(ReplayError) as exc:
        replay(config, ExecutionTrace(steps))
    assert exc.value.index == 5


def test_observable_steps_of_a_fair_writer(make_config):
    labels = observable_steps(make_config("fair", m=3, n=1), pid=3)
    assert labels == (
        [StepLabel.p(MUTEX)] + [StepLabel.p(ACCESS)] * 3 + [ENTER_WRITE, EXIT_WRITE]
        + [StepLabel.v(ACCESS)] * 3 + [StepLabel.v(MUTEX)]
    )


# ---------------------------------------------------------------- bypass

def test_bypass_count_on_a_handwritten_trace():
    w, p_access = 2, StepLabel.p(ACCESS)
    steps = [
        (w, p_access), (0, ENTER_READ), (1, ENTER_READ), (w, ENTER_WRITE),
        (0, ENTER_READ), (w, p_access), (1, ENTER_READ),
    ]
    trace = ExecutionTrace([TraceStep(i, pid, label, None) for i, (pid, label) in enumerate(steps)])
    assert bypass_count(trace, w) == [2, 1]
    assert bypass_count(trace, 9) == []
    stats = collect_bypass_stats(trace, [w])
    assert stats.max_by_writer == {w: 2}
    assert stats.wait_steps[w] == [3, 2]


# ---------------------------------------------------------------- starvation

def test_standard_writer_can_be_starved(make_config):
    config = make_config("standard", m=2, n=1)
    counts = []
    for horizon in (50, 100, 200):
        trace = find_starvation_schedule(config, horizon)
        assert trace is not None
        assert len(trace) >= horizon
        final = replay(replace(config, loop_bound=horizon + 1), trace)
        assert final.blocked_on(2) == ACCESS
        bypass = max(bypass_count(trace, 2))
        assert bypass >= horizon // 20
        counts.append(bypass)
    assert counts[0] < counts[1] < counts[2]


@pytest.mark.parametrize("horizon", [50, 100, 200])
def test_fair_fifo_writer_cannot_be_starved(make_config, horizon):
    assert find_starvation_schedule(make_config("fair", m=2, n=1), horizon) is None


def test_single_standard_reader_cannot_starve_a_writer(make_config):
    assert find_starvation_schedule(make_config("standard", m=1, n=1), 50) is None


def test_weak_semaphores_let_readers_barge(make_config):
    trace = find_starvation_schedule(make_config("fair", m=2, n=1, policy="weak"), 100)
    assert trace is not None
    assert max(bypass_count(trace, 2)) >= 5


def test_starvation_search_needs_a_writer(make_config):
    with pytest.raises(ConstructionError):
        find_starvation_schedule(make_config("standard", m=2, n=0), 50)
    with pytest.raises(ConstructionError):
        find_starvation_schedule(make_config("standard", m=2, n=1), 0)


# ---------------------------------------------------------------- random

def test_random_runs_are_reproducible(make_config):
    config = make_config("fair", m=3, n=2, loop_bound=50)
    first, _ = run_random(config, seed=11, max_steps=2000)
    second, _ = run_random(config, seed=11, max_steps=2000)
    assert first.to_jsonl() == second.to_jsonl()
    other, _ = run_random(config, seed=12, max_steps=2000)
    assert other.to_jsonl() != first.to_jsonl()


def test_shorter_run_is_a_prefix_of_a_longer_one(make_config):
    config = make_config("standard", m=2, n=1, loop_bound=1000)
    short, _ = run_random(config, seed=5, max_steps=300)
    long, _ = run_random(config, seed=5, max_steps=1200)
    assert short.to_jsonl() == long.prefix(300).to_jsonl()


def test_random_run_to_completion(make_config):
    config = make_config("fair", m=2, n=1, loop_bound=1)
    trace, stats = run_random(config, seed=0, max_steps=10_000)
    assert trace.end_reason == "halted"
    assert trace.violations == []
    assert replay(config, trace).pcs == tuple(len(p.steps) for p in build_system(config)[1])
    assert list(stats.per_writer) == [2]


def test_random_runs_respect_fifo_order(make_config):
    config = make_config("fair", m=3, n=2, loop_bound=20)
    for seed in range(10):
        trace, _ = run_random(config, seed, max_steps=1000)
        assert fifo_overtakes(config, trace) == []


def test_random_search_finds_the_broken_deadlock(make_config):
    config = make_config("broken-fair-no-mutex", m=2, n=2, loop_bound=1)
    reasons = {run_random(config, seed, max_steps=1000)[0].end_reason for seed in range(200)}
    assert "deadlock" in reasons


@pytest.mark.stress
def test_fifo_bypass_stays_bounded_while_weak_grows(make_config):
    fifo = make_config("fair", m=4, n=1, loop_bound=100_000, policy="fifo")
    weak = make_config("fair", m=4, n=1, loop_bound=100_000, policy="weak")
    lengths = (1_000, 5_000, 25_000)

    def maxima(config):
        per_length = {length: [] for length in lengths}
        for seed in range(100):
            trace, _ = run_random(config, seed, max_steps=lengths[-1])
            for length in lengths:
                stats = collect_bypass_stats(trace.prefix(length), [4])
                per_length[length].append(stats.max_by_writer.get(4, 0))
        return per_length

    fifo_max, weak_max = maxima(fifo), maxima(weak)
    fifo_5k, fifo_25k = max(fifo_max[5_000]), max(fifo_max[25_000])
    if fifo_5k == 0:
        assert fifo_25k == 0
    else:
        assert fifo_25k <= 1.1 * fifo_5k
    assert max(weak_max[25_000]) >= max(fifo_max[25_000])
    assert any(late > early for early, late in zip(weak_max[1_000], weak_max[25_000]))
