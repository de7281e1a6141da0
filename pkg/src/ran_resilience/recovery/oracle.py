"""Exhaustive reference solver for small recovery instances.

Shares no code with the candidate builder or the search. Loads are rebuilt
from placements and routes rather than read from residual fields, subsets
of disrupted RUs are tried in decreasing order of total demand, and the
first subset admitting a feasible assignment is optimal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..failure import DisruptionReport, FailureScenario, in_failure_state, propagate_cascade, sample_failure
from ..ran_model import (
    InfeasibleInstance,
    InstanceParams,
    NetworkState,
    RadioUnit,
    SystemInstance,
    UserDemand,
    build_instance,
    default_demand_profile,
    initial_placement,
)
from ..topology import NodeKind, Path, TopologyParams, build_ring_topology
from .plan import Decision, RecoveryPlan, SolveStats

__all__ = ["OracleRefused", "OracleCase", "brute_force_oracle", "random_case", "ORACLE_LIMITS"]

ORACLE_LIMITS = {"disrupted_rus": 6, "clouds_up": 6, "paths_k": 3}


class OracleRefused(ValueError):
    pass


def _latency(topology, path: Path) -> float:
    return sum(topology.links[i].latency_s for i in path.links)


def _ok(topology, path: Path, clouds_up, budget: float) -> bool:
    for node in path.nodes:
        if topology.kind(node) is NodeKind.CLOUD and node not in clouds_up:
            return False
    return _latency(topology, path) <= budget * (1 + 1e-9)


def brute_force_oracle(report: DisruptionReport, instance: SystemInstance, state: NetworkState) -> RecoveryPlan:
    """Optimal plan by enumeration; refuses instances beyond :data:`ORACLE_LIMITS`."""
    topo = instance.topology
    disrupted = sorted(report.ru_disrupted)
    up = sorted(report.clouds_up)
    if len(disrupted) > ORACLE_LIMITS["disrupted_rus"]:
        raise OracleRefused(f"{len(disrupted)} disrupted RUs exceeds the oracle limit of {ORACLE_LIMITS['disrupted_rus']}")
    if len(up) > ORACLE_LIMITS["clouds_up"]:
        raise OracleRefused(f"{len(up)} operational clouds exceeds the oracle limit of {ORACLE_LIMITS['clouds_up']}")
    if topo.paths_k > ORACLE_LIMITS["paths_k"]:
        raise OracleRefused(f"paths_k={topo.paths_k} exceeds the oracle limit of {ORACLE_LIMITS['paths_k']}")

    # Baseline usage: every function and route that exists in the failure state.
    base_compute = {c.id: 0.0 for c in instance.clouds}
    base_bw = {l.index: 0 for l in topo.links}
    for ru in state.ru_status:
        dem = instance.demand[ru]
        if state.cu_at.get(ru) is not None:
            base_compute[state.cu_at[ru]] += dem.cu_load
        if state.du_at.get(ru) is not None:
            base_compute[state.du_at[ru]] += dem.du_load
        routes = state.routes.get(ru)
        if routes is None:
            continue
        for seg, traffic in (("bh", dem.bh_bps), ("mh", dem.mh_bps), ("fh", dem.fh_bps)):
            path = getattr(routes, seg)
            if path is not None:
                for link in path.links:
                    base_bw[link] += traffic
    capacity = {c.id: (c.capacity_cu if c.id in report.clouds_up else 0.0) for c in instance.clouds}
    link_cap = {l.index: l.capacity_bps for l in topo.links}

    # Per-RU alternatives as (decision, extra compute, extra bandwidth).
    recover_alts: dict[int, list] = {}
    keep_alts: dict[int, list] = {}
    for ru in disrupted:
        dem = instance.demand[ru]
        routes = state.routes.get(ru)
        kept = {seg: getattr(routes, seg) if routes else None for seg in ("bh", "mh", "fh")}
        pin_cu, pin_du = state.cu_at.get(ru), state.du_at.get(ru)
        budgets = {"bh": dem.bh_lat_s, "mh": dem.mh_lat_s, "fh": dem.fh_lat_s}
        traffic = {"bh": dem.bh_bps, "mh": dem.mh_bps, "fh": dem.fh_bps}

        def choices(seg, src, dst):
            if kept[seg] is not None:
                p = kept[seg]
                return [(p, False)] if (p.nodes[0], p.nodes[-1]) == (src, dst) else []
            return [(p, True) for p in topo.paths(src, dst) if _ok(topo, p, report.clouds_up, budgets[seg])]

        alts = []
        for cu in ([pin_cu] if pin_cu is not None else up):
            for du in ([pin_du] if pin_du is not None else up):
                compute = {}
                if pin_cu is None:
                    compute[cu] = compute.get(cu, 0.0) + dem.cu_load
                if pin_du is None:
                    compute[du] = compute.get(du, 0.0) + dem.du_load
                for (bh, nb), (mh, nm), (fh, nf) in itertools.product(
                    choices("bh", topo.core, cu), choices("mh", cu, du), choices("fh", du, ru)
                ):
                    bw = {}
                    for path, new, seg in ((bh, nb, "bh"), (mh, nm, "mh"), (fh, nf, "fh")):
                        if new:
                            for link in path.links:
                                bw[link] = bw.get(link, 0) + traffic[seg]
                    alts.append((Decision(ru, True, cu, du, bh, mh, fh), compute, bw))
        recover_alts[ru] = alts

        forced = []
        if pin_cu is not None and kept["bh"] is None:
            forced.append(("bh", choices("bh", topo.core, pin_cu)))
        if pin_du is not None and kept["fh"] is None:
            forced.append(("fh", choices("fh", pin_du, ru)))
        keeps = []
        for combo in itertools.product(*(c for _, c in forced)):
            bw = {}
            picked = {}
            for (seg, _), (path, _) in zip(forced, combo):
                picked[seg] = path
                for link in path.links:
                    bw[link] = bw.get(link, 0) + traffic[seg]
            keeps.append((Decision(ru, False, None, None, picked.get("bh"), None, picked.get("fh")), {}, bw))
        keep_alts[ru] = keeps

    def search(order, compute, bw, picked) -> Optional[list]:
        if not order:
            return list(picked)
        (ru, alts), rest = order[0], order[1:]
        for decision, dc, db in alts:
            if any(compute[c] + q > capacity[c] + 1e-9 for c, q in dc.items()):
                continue
            if any(bw[l] + t > link_cap[l] for l, t in db.items()):
                continue
            for c, q in dc.items():
                compute[c] += q
            for l, t in db.items():
                bw[l] += t
            found = search(rest, compute, bw, picked + [decision])
            for c, q in dc.items():
                compute[c] -= q
            for l, t in db.items():
                bw[l] -= t
            if found is not None:
                return found
        return None

    subsets = []
    for size in range(len(disrupted) + 1):
        for subset in itertools.combinations(disrupted, size):
            subsets.append((sum(instance.ru_demand_bps(r) for r in subset), subset))
    subsets.sort(key=lambda s: (-s[0], s[1]))
    tried = 0
    for value, subset in subsets:
        tried += 1
        chosen = set(subset)
        order = [(ru, recover_alts[ru] if ru in chosen else keep_alts[ru]) for ru in disrupted]
        found = search(order, dict(base_compute), dict(base_bw), [])
        if found is not None:
            stats = SolveStats(nodes_explored=tried, best_bound=value, wall_time_s=0.0, proven_optimal=True)
            return RecoveryPlan(tuple(sorted(found, key=lambda d: d.ru)), value, stats)
    raise OracleRefused("no feasible assignment even with every RU left unrecovered")


@dataclass(frozen=True)
class OracleCase:
    seed: int
    instance: SystemInstance
    scenario: FailureScenario
    state_t0: NetworkState
    report: DisruptionReport
    state_in_failure: NetworkState


def random_case(
    seed: int,
    max_disrupted: int = 4,
    max_clouds_up: int = 5,
    max_k: int = 3,
    severity: Optional[float] = None,
) -> OracleCase:
    """Seeded small instance whose disruption fits the given guard rails.

    Ring size, capacities, latency budgets, paths per pair and per-RU demand
    are all drawn at random, as is the severity unless one is given. Draws
    that cannot be placed at t0 or that break the guard rails are redrawn.
    """
    if max_k > ORACLE_LIMITS["paths_k"] or max_disrupted > ORACLE_LIMITS["disrupted_rus"] \
            or max_clouds_up > ORACLE_LIMITS["clouds_up"]:
        raise OracleRefused(f"requested guard rails exceed the oracle limits {ORACLE_LIMITS}")
    if max_k < 1 or max_clouds_up < 1 or max_disrupted < 0:
        raise ValueError("guard rails must allow at least one path and one operational cloud")
    rng = np.random.default_rng(seed)
    while True:
        n = int(rng.integers(2, max_clouds_up + 2))
        topo_params = TopologyParams(
            link_capacity_bps=float(rng.choice([30e9, 50e9, 100e9])),
            link_latency_s=float(rng.choice([0.05e-3, 0.1e-3])),
            core_link_capacity_bps=float(rng.choice([40e9, 100e9, 400e9])),
            core_site=int(rng.integers(0, n)),
            paths_k=int(rng.integers(1, max_k + 1)),
        )
        params = InstanceParams(
            users_per_ru=int(rng.integers(1, 4)),
            cloud_capacity=float(rng.choice([3.0, 4.0, 5.0, 6.0, 9.0])),
            fh_lat_s=float(rng.choice([0.1e-3, 0.25e-3])),
            cu_placement=str(rng.choice(["pooled", "colocated"])),
            cu_pool_stride=int(rng.integers(1, 4)),
        )
        instance = build_instance(build_ring_topology(n, topo_params), params, seed=int(rng.integers(0, 2**31)))
        # Unequal demands: scale each RU's users by a random half-integer factor.
        radios = []
        for radio in instance.radios:
            factor = int(rng.integers(0, 5))
            users = tuple(UserDemand(u.id, u.rate_bps * factor // 2) for u in radio.users)
            radios.append(RadioUnit(radio.id, users))
        instance = replace(instance, radios=tuple(radios))
        instance = replace(instance, demand=default_demand_profile(instance))
        try:
            state_t0 = initial_placement(instance)
        except InfeasibleInstance:
            continue
        level = int(rng.integers(0, n + 1)) / n if severity is None else severity
        scenario = sample_failure(instance, level, int(rng.integers(0, 2**31)))
        report = propagate_cascade(state_t0, scenario, instance)
        if len(report.ru_disrupted) > max_disrupted or len(report.clouds_up) > max_clouds_up:
            continue
        state = in_failure_state(state_t0, report, instance)
        return OracleCase(seed, instance, scenario, state_t0, report, state)
