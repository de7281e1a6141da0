import pytest
from hypothesis import given
from hypothesis import strategies as st

from ran_resilience.baselines import STRATEGIES
from ran_resilience.failure import FailureScenario
from ran_resilience.ran_model import InstanceParams, build_instance, initial_placement
from ran_resilience.simulation import (
    InstanceError,
    MetricsRow,
    Timeline,
    TimingParams,
    UtilityTrace,
    aggregate,
    check_trace_shape,
    cpu_utilization,
    play_instance,
    relative_gain,
    run_instance,
)
from ran_resilience.topology import build_ring_topology

FIXED = TimingParams(solve_time_s=0.02)


def ring_instance(n, seed=0, params=None):
    return build_instance(build_ring_topology(n), params or InstanceParams(), seed=seed)


def scenario_for(instance, severity, seed):
    from ran_resilience.failure import sample_failure

    return sample_failure(instance, severity, seed)


def test_zero_severity_is_flat():
    inst = ring_instance(10)
    for strategy in STRATEGIES:
        trace, row, timeline = run_instance(inst, scenario_for(inst, 0.0, 1), strategy, FIXED)
        assert {u for _, u in trace.samples} == {row.mu_t0}
        assert row.mu_t0 == row.mu_td == row.mu_tr
        assert row.resilience == 1.0
        assert row.recovery_gain_vs_no_recovery == 0.0
        assert row.disrupted_rus == row.recovered_rus == 0


def test_no_recovery_drops_and_stays():
    inst = ring_instance(20, seed=2)
    trace, row, timeline = run_instance(inst, scenario_for(inst, 0.25, 2), "no_recovery", FIXED)
    assert row.mu_td < row.mu_t0 and row.mu_tr == row.mu_td
    assert all(u == row.mu_t0 for t, u in trace.samples if t < timeline.td_s)
    assert all(u == row.mu_td for t, u in trace.samples if t >= timeline.td_s)
    assert row.resilience == pytest.approx(row.mu_td / row.mu_t0)
    assert row.recovery_gain_vs_no_recovery == 0.0
    assert check_trace_shape(trace, timeline, row.mu_t0, row.mu_td, row.mu_tr) == []


def test_timeline_positions():
    inst = ring_instance(10, seed=1)
    _, _, tl = run_instance(inst, scenario_for(inst, 0.1, 1), "optimizer", FIXED)
    assert tl.t0_s == 0.0
    assert tl.td_s == pytest.approx(0.1)
    assert tl.tu_s == pytest.approx(tl.td_s + 0.04)
    assert tl.ts_s == pytest.approx(tl.tu_s + 0.02)
    assert tl.tr_s == pytest.approx(tl.ts_s + 1.0)


@given(
    n=st.integers(5, 25),
    severity=st.sampled_from([0.05, 0.1, 0.25, 0.5, 1.0]),
    seed=st.integers(0, 5000),
    strategy=st.sampled_from(STRATEGIES),
)
def test_trace_shape_and_endpoints(n, severity, seed, strategy):
    inst = ring_instance(n, seed=seed)
    run = play_instance(inst, scenario_for(inst, severity, seed), strategy, FIXED)
    row, trace, tl = run.row, run.trace, run.timeline
    assert check_trace_shape(trace, tl, row.mu_t0, row.mu_td, row.mu_tr) == []
    times = [t for t, _ in trace.samples]
    assert times[0] == 0.0
    assert all(b - a == pytest.approx(FIXED.tti_s) for a, b in zip(times, times[1:]))
    assert times[-1] >= tl.tr_s + FIXED.tail_s - 1e-9
    assert trace.samples[-1][1] == row.mu_tr
    assert row.mu_td <= row.mu_tr <= row.mu_t0
    # Every rise in the ramp is a whole restored RU (or several landing in one TTI).
    rises = [b - a for (_, a), (_, b) in zip(trace.samples, trace.samples[1:]) if b > a]
    assert sum(rises) == row.mu_tr - row.mu_td
    assert len(rises) <= len(run.outcome.restored)
    if strategy == "optimizer":
        assert row.mu_tr == row.mu_td + run.outcome.plan.objective_value
        assert row.recovered_rus == len(run.outcome.plan.recovered)
        if row.recovered_rus:
            assert row.cpu_after >= row.cpu_before
    else:
        assert row.cpu_after == row.cpu_before


def ms(values):
    return tuple((k * 1e-3, u) for k, u in enumerate(values))


def test_shape_checker_catches_defects():
    tl = Timeline(0.0, 0.002, 0.003, 0.004, 0.006)
    good = UtilityTrace(1e-3, ms([10, 10, 4, 4, 4, 7, 9, 9]))
    assert check_trace_shape(good, tl, 10, 4, 9) == []
    dip = UtilityTrace(1e-3, ms([10, 10, 4, 4, 4, 8, 7, 9]))
    assert "utility decreases during the recovery ramp" in check_trace_shape(dip, tl, 10, 4, 9)
    early = UtilityTrace(1e-3, ms([10, 10, 4, 6, 4, 7, 9, 9]))
    assert check_trace_shape(early, tl, 10, 4, 9)
    assert check_trace_shape(UtilityTrace(1e-3, ()), tl, 10, 4, 9) == ["trace is empty"]


def test_same_inputs_same_trace():
    inst = ring_instance(30, seed=7)
    a = play_instance(inst, scenario_for(inst, 0.25, 7), "optimizer", FIXED)
    b = play_instance(inst, scenario_for(inst, 0.25, 7), "optimizer", FIXED)
    assert a.trace == b.trace and a.row == b.row


def test_cpu_of_full_colocated_ring():
    inst = ring_instance(10, params=InstanceParams(cu_placement="colocated"))
    state = initial_placement(inst)
    used, share = cpu_utilization(state, inst)
    assert used == 30.0
    assert share == pytest.approx(30.0 / 60.0)


def test_relative_gain():
    assert relative_gain(150, 100) == 0.5
    assert relative_gain(0, 0) is None
    assert relative_gain(5, 0) is None


def test_strategy_errors_carry_ids():
    inst = ring_instance(5)
    with pytest.raises(InstanceError) as err:
        play_instance(inst, FailureScenario(0.2, frozenset({5}), 9), "prayer", FIXED)
    assert (err.value.n_rus, err.value.seed, err.value.strategy) == (5, 9, "prayer")
    assert "seed=9" in str(err.value)


def test_validation():
    with pytest.raises(ValueError):
        TimingParams(tti_s=0.0)
    with pytest.raises(ValueError):
        TimingParams(detection_wait_s=-1.0)
    with pytest.raises(ValueError):
        Timeline(0.0, 0.2, 0.1, 0.3, 0.4)
    with pytest.raises(ValueError):
        UtilityTrace(1e-3, ((0.0, 1), (0.0, 1)))


def make_row(resilience, gain=0.1, seed=0, severity=0.1, n=10, strategy="optimizer"):
    return MetricsRow(n, severity, seed, strategy, 10, 5, 9, resilience, gain, gain, 3.0, 6.0, 2, 1)


def test_aggregate_identical_rows():
    rows = [make_row(0.9, seed=s) for s in range(5)]
    stats = aggregate(rows)[(0.1, 10, "optimizer")]["resilience"]
    assert stats == {"count": 5, "mean": 0.9, "std": 0.0, "min": 0.9, "max": 0.9}


def test_aggregate_drops_undefined_gains():
    rows = [make_row(1.0, gain=None), make_row(0.5, gain=0.25)]
    stats = aggregate(rows)[(0.1, 10, "optimizer")]
    assert stats["recovery_gain_vs_baseline"]["count"] == 1
    assert stats["resilience"]["mean"] == 0.75
    assert stats["resilience"]["std"] == 0.25
    only_none = aggregate([make_row(1.0, gain=None)])[(0.1, 10, "optimizer")]
    assert only_none["recovery_gain_vs_no_recovery"] == {"count": 0}


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30), st.randoms(use_true_random=False))
def test_aggregate_ignores_row_order(values, rnd):
    rows = [make_row(v, seed=i, severity=[0.05, 0.5][i % 2]) for i, v in enumerate(values)]
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    assert aggregate(rows) == aggregate(shuffled)
    mean = aggregate(rows)[(0.05, 10, "optimizer")]["resilience"]["mean"]
    evens = sorted(values[0::2])
    assert mean == pytest.approx(sum(evens) / len(evens))
