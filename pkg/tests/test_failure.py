from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ran_resilience.failure import (
    FailureScenario,
    InconsistentState,
    failed_count,
    in_failure_state,
    propagate_cascade,
    sample_failure,
)
from ran_resilience.ran_model import (
    InstanceParams,
    RuStatus,
    audit_state,
    build_instance,
    compute_utility,
    initial_placement,
)
from ran_resilience.topology import NodeKind, build_ring_topology


def dependency_walk(state, instance, failed):
    """RUs whose chain touches a failed cloud, by a direct scan of placements and routes."""
    topo = instance.topology
    hit = set()
    for ru in instance.ru_ids:
        touched = {state.cu_at[ru], state.du_at[ru]}
        for _, path in state.routes[ru].segments():
            touched.update(n for n in path.nodes if topo.kind(n) is NodeKind.CLOUD)
        if touched & failed:
            hit.add(ru)
    return hit


def test_severity_counts():
    inst = build_instance(build_ring_topology(50))
    assert sample_failure(inst, 0.0, 7).failed_clouds == frozenset()
    assert len(sample_failure(inst, 0.10, 7).failed_clouds) == 5
    assert len(sample_failure(inst, 0.05, 7).failed_clouds) == 3  # 2.5 rounds half up
    everything = sample_failure(inst, 1.0, 7)
    assert everything.failed_clouds == frozenset(inst.topology.clouds)
    state = initial_placement(inst)
    report = propagate_cascade(state, everything, inst)
    assert report.ru_disrupted == frozenset(inst.ru_ids)


def test_failed_count_rounding():
    assert [failed_count(s, 10) for s in (0.0, 0.05, 0.14, 0.15, 1.0)] == [0, 1, 1, 2, 10]
    with pytest.raises(ValueError):
        sample_failure(build_instance(build_ring_topology(3)), 1.5, 0)


def test_no_failure_is_identity(make_case):
    case = make_case(10)
    assert case.report.ru_disrupted == frozenset()
    assert case.report.ru_operational == frozenset(case.instance.ru_ids)
    assert case.state.ru_status == case.state_t0.ru_status
    assert case.state.residual_compute == case.state_t0.residual_compute
    assert case.state.residual_bw == case.state_t0.residual_bw
    assert compute_utility(case.state, case.instance) == compute_utility(case.state_t0, case.instance)


def test_single_du_cloud_failure(make_case):
    # Pooled CUs sit on hub sites 0 and 4 of the 5-ring, so cloud 8 (site 3) hosts only RU 3's DU.
    probe = make_case(5)
    assert probe.state_t0.du_at[3] == 8
    assert probe.state_t0.cu_at[3] != 8
    assert all(probe.state_t0.cu_at[r] != 8 and (r == 3 or probe.state_t0.du_at[r] != 8) for r in range(5))
    case = make_case(5, failed=[8])
    assert case.report.ru_disrupted == {3}
    assert case.report.surviving_cu[3] == probe.state_t0.cu_at[3]
    assert case.report.surviving_du[3] is None


def test_hub_failure_takes_down_its_cu_clients(make_case):
    probe = make_case(8)
    hub = probe.topology.colocated_cloud(0)
    clients = {r for r in probe.instance.ru_ids if probe.state_t0.cu_at[r] == hub}
    assert len(clients) == 4
    case = make_case(8, failed=[hub])
    assert clients <= case.report.ru_disrupted
    assert case.report.ru_disrupted == dependency_walk(probe.state_t0, probe.instance, {hub})


@given(st.integers(2, 14), st.integers(0, 500), st.data())
def test_cascade_matches_dependency_walk(n, seed, data):
    topo = build_ring_topology(n)
    inst = build_instance(topo, seed=seed)
    state = initial_placement(inst)
    failed = frozenset(data.draw(st.sets(st.sampled_from(topo.clouds))))
    report = propagate_cascade(state, FailureScenario(len(failed) / n, failed, seed), inst)
    assert report.ru_disrupted == dependency_walk(state, inst, failed)
    assert report.ru_disrupted | report.ru_operational == set(inst.ru_ids)
    assert not report.ru_disrupted & report.ru_operational
    assert report.clouds_up == frozenset(topo.clouds) - failed
    for ru in report.ru_disrupted:
        for kept in (report.surviving_cu[ru], report.surviving_du[ru]):
            assert kept is None or kept in report.clouds_up

    after = in_failure_state(state, report, inst)
    assert audit_state(after, inst) == []
    for cloud in failed:
        assert after.residual_compute[cloud] == 0.0
    # Cascade closure: operational chains avoid failed clouds entirely.
    for ru in report.ru_operational:
        assert after.ru_status[ru] is RuStatus.OPERATIONAL
        assert not dependency_walk(after, inst, failed) & {ru}
    mu_t0, mu_td = compute_utility(state, inst), compute_utility(after, inst)
    assert mu_td <= mu_t0
    if report.ru_disrupted:
        assert mu_td < mu_t0


@given(st.integers(3, 14), st.integers(0, 500), st.data())
def test_more_failures_never_shrink_disruption(n, seed, data):
    topo = build_ring_topology(n)
    inst = build_instance(topo, seed=seed)
    state = initial_placement(inst)
    small = data.draw(st.sets(st.sampled_from(topo.clouds)))
    large = small | data.draw(st.sets(st.sampled_from(topo.clouds)))
    a = propagate_cascade(state, FailureScenario(0, frozenset(small), 0), inst)
    b = propagate_cascade(state, FailureScenario(0, frozenset(large), 0), inst)
    assert a.ru_disrupted <= b.ru_disrupted


@given(st.integers(0, 10_000))
def test_seeded_severities_nest(seed):
    inst = build_instance(build_ring_topology(20))
    sets = [sample_failure(inst, s, seed).failed_clouds for s in (0.05, 0.10, 0.25, 0.50)]
    assert all(a <= b for a, b in zip(sets, sets[1:]))


def test_determinism():
    inst = build_instance(build_ring_topology(30), seed=4)
    state = initial_placement(inst)
    a = propagate_cascade(state, sample_failure(inst, 0.25, 9), inst)
    b = propagate_cascade(state, sample_failure(inst, 0.25, 9), inst)
    assert a == b


def test_total_failure_zero_utility(make_case):
    case = make_case(6, severity=1.0)
    assert compute_utility(case.state, case.instance) == 0


def test_uniform_demand_in_failure_floor():
    params = InstanceParams(cu_placement="colocated", cloud_capacity=6.0)
    inst = build_instance(build_ring_topology(10), params)
    state = initial_placement(inst)
    failed = frozenset(inst.topology.colocated_cloud(r) for r in (1, 4, 8))
    report = propagate_cascade(state, FailureScenario(0.3, failed, 0), inst)
    assert report.ru_disrupted == {1, 4, 8}
    d = inst.ru_demand_bps(0)
    assert compute_utility(in_failure_state(state, report, inst), inst) == 7 * d


def test_dead_segments_release_bandwidth(make_case):
    case = make_case(5, failed=[8])
    dem = case.instance.demand[3]
    old = case.state_t0.routes[3]
    kept = case.state.routes[3]
    # Backhaul between core and the surviving CU stays; the DU-side segments go.
    assert kept.bh == old.bh and kept.mh is None and kept.fh is None
    for link in old.fh.links:
        assert case.state.residual_bw[link] == case.state_t0.residual_bw[link] + dem.fh_bps


def test_inconsistent_report_rejected(make_case):
    case = make_case(5, failed=[8])
    bad = replace(case.report, ru_operational=case.report.ru_operational | {3})
    with pytest.raises(InconsistentState):
        in_failure_state(case.state_t0, bad, case.instance)
    with pytest.raises(InconsistentState):
        propagate_cascade(case.state, case.scenario, case.instance)
