"""Cloud-site failure scenarios and their cascade through CU-DU-RU chains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ran_model import NetworkState, Routes, RuStatus, SystemInstance, path_is_up, segment_traffic

__all__ = [
    "FailureScenario",
    "DisruptionReport",
    "InconsistentState",
    "failed_count",
    "sample_failure",
    "propagate_cascade",
    "in_failure_state",
]


class InconsistentState(RuntimeError):
    pass


def failed_count(severity: float, n_clouds: int) -> int:
    """Number of failed clouds, ``severity * n_clouds`` rounded half up."""
    return min(n_clouds, int(math.floor(severity * n_clouds + 0.5)))


@dataclass(frozen=True)
class FailureScenario:
    severity: float
    failed_clouds: frozenset[int]
    seed: int


@dataclass(frozen=True)
class DisruptionReport:
    ru_disrupted: frozenset[int]
    ru_operational: frozenset[int]
    clouds_up: frozenset[int]
    surviving_cu: dict[int, int | None] = field(default_factory=dict)
    surviving_du: dict[int, int | None] = field(default_factory=dict)
    # Segments of disrupted chains that still run between live endpoints.
    surviving_routes: dict[int, Routes] = field(default_factory=dict)


def sample_failure(instance: SystemInstance, severity: float, seed: int) -> FailureScenario:
    """Fail ``round(severity * |clouds|)`` distinct clouds chosen uniformly at random.

    The draw is a seeded permutation truncated to the failure count, so for a
    fixed seed a higher severity fails a superset of clouds.
    """
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity must lie in [0, 1], got {severity}")
    clouds = sorted(c.id for c in instance.clouds)
    count = failed_count(severity, len(clouds))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(clouds))
    failed = frozenset(clouds[i] for i in order[:count])
    return FailureScenario(severity=severity, failed_clouds=failed, seed=seed)


def propagate_cascade(state_t0: NetworkState, scenario: FailureScenario, instance: SystemInstance) -> DisruptionReport:
    """Which chains break when the scenario's clouds go down.

    An RU is disrupted when its CU or DU sits on a failed cloud or when one of
    its routes touches a failed cloud. Functions on live clouds survive and
    stay placed.
    """
    topo = instance.topology
    clouds_up = frozenset(c for c in state_t0.cloud_up if c not in scenario.failed_clouds)
    disrupted, operational = set(), set()
    surviving_cu, surviving_du, surviving_routes = {}, {}, {}
    for ru in sorted(state_t0.ru_status):
        if state_t0.ru_status[ru] is RuStatus.DISRUPTED:
            raise InconsistentState(f"RU {ru} is already disrupted in the pre-failure state")
        cu, du = state_t0.cu_at[ru], state_t0.du_at[ru]
        routes = state_t0.routes[ru]
        cu_alive = cu in clouds_up
        du_alive = du in clouds_up
        alive = {}
        for seg, path in routes.segments():
            alive[seg] = path_is_up(topo, path, clouds_up)
        if cu_alive and du_alive and all(alive.values()):
            operational.add(ru)
            continue
        disrupted.add(ru)
        surviving_cu[ru] = cu if cu_alive else None
        surviving_du[ru] = du if du_alive else None
        keep = {
            "bh": cu_alive and alive.get("bh", False),
            "mh": cu_alive and du_alive and alive.get("mh", False),
            "fh": du_alive and alive.get("fh", False),
        }
        surviving_routes[ru] = Routes(
            bh=routes.bh if keep["bh"] else None,
            mh=routes.mh if keep["mh"] else None,
            fh=routes.fh if keep["fh"] else None,
        )
    return DisruptionReport(
        ru_disrupted=frozenset(disrupted),
        ru_operational=frozenset(operational),
        clouds_up=clouds_up,
        surviving_cu=surviving_cu,
        surviving_du=surviving_du,
        surviving_routes=surviving_routes,
    )


def in_failure_state(state_t0: NetworkState, report: DisruptionReport, instance: SystemInstance) -> NetworkState:
    """Network state once the failure has been absorbed.

    Failed clouds drop to zero capacity, dead functions disappear, and dead
    route segments hand their bandwidth back. Surviving functions and live
    segments of disrupted chains keep their allocations.
    """
    rus = set(state_t0.ru_status)
    if report.ru_disrupted & report.ru_operational or (report.ru_disrupted | report.ru_operational) != rus:
        raise InconsistentState("report does not partition the state's RUs")
    if not report.clouds_up <= state_t0.cloud_up:
        raise InconsistentState("report lists clouds that were not up before the failure")

    state = state_t0.copy()
    state.cloud_up = report.clouds_up
    for cloud in state_t0.cloud_up - report.clouds_up:
        state.residual_compute[cloud] = 0.0
    for ru in sorted(report.ru_disrupted):
        cu, du = state_t0.cu_at[ru], state_t0.du_at[ru]
        keep_cu = report.surviving_cu.get(ru)
        keep_du = report.surviving_du.get(ru)
        if keep_cu not in (None, cu) or keep_du not in (None, du):
            raise InconsistentState(f"surviving placement of RU {ru} disagrees with the state")
        if (keep_cu is None) == (cu in report.clouds_up) or (keep_du is None) == (du in report.clouds_up):
            raise InconsistentState(f"survivor bookkeeping of RU {ru} disagrees with cloud status")
        dem = instance.demand[ru]
        kept = report.surviving_routes.get(ru, Routes())
        for seg, path in state_t0.routes[ru].segments():
            if getattr(kept, seg) is None:
                for link in path.links:
                    state.residual_bw[link] += segment_traffic(dem, seg)
        state.cu_at[ru] = keep_cu
        state.du_at[ru] = keep_du
        state.routes[ru] = kept
        state.ru_status[ru] = RuStatus.DISRUPTED
    return state
