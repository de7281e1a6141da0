"""Reference recovery strategies: doing nothing, and coverage expansion by neighbor RUs.

Coverage expansion stands in for power and tilt adjustment. Users of a
disrupted RU are offered, whole and in descending rate order, to operational
RUs a few ring hops away. An absorbed user is served at a penalized rate and
draws on a per-neighbor headroom budget. Chains themselves are untouched.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .failure import DisruptionReport
from .ran_model import NetworkState, RuStatus, SystemInstance, compute_utility, peak_cell_capacity
from .recovery.plan import RecoveryPlan
from .topology import NodeKind, Topology

__all__ = [
    "STRATEGIES",
    "CoverageExpansionParams",
    "RecoveryOutcome",
    "no_recovery",
    "coverage_expansion",
    "ru_hop_distances",
]

STRATEGIES = ("optimizer", "coverage_expansion", "no_recovery")


@dataclass(frozen=True)
class CoverageExpansionParams:
    neighbor_hops: int = 1
    rate_penalty: float = 0.5
    capacity_headroom: float = 0.3

    def __post_init__(self):
        if not isinstance(self.neighbor_hops, int) or self.neighbor_hops < 0:
            raise ValueError("neighbor_hops must be a non-negative integer")
        if not 0.0 <= self.rate_penalty <= 1.0:
            raise ValueError("rate_penalty must lie in [0, 1]")
        if not 0.0 <= self.capacity_headroom <= 1.0:
            raise ValueError("capacity_headroom must lie in [0, 1]")


@dataclass(frozen=True)
class RecoveryOutcome:
    """What a strategy leaves behind.

    ``state`` holds the chains after recovery. ``utility_bps`` is the
    aggregate utility, which for coverage expansion also counts users served
    by neighbors. ``restored`` maps each disrupted RU to the utility it
    brings back once its recovery action completes.
    """

    strategy: str
    state: NetworkState
    utility_bps: int
    restored: dict[int, int] = field(default_factory=dict)
    plan: Optional[RecoveryPlan] = None


def no_recovery(state_in_failure: NetworkState, instance: SystemInstance) -> RecoveryOutcome:
    return RecoveryOutcome("no_recovery", state_in_failure, compute_utility(state_in_failure, instance))


def ru_hop_distances(topology: Topology, src: int, limit: int) -> dict[int, int]:
    """Hop counts from RU site ``src`` to RU sites within ``limit`` hops over site-to-site links."""
    dist = {src: 0}
    queue = deque([src])
    while queue:
        node = queue.popleft()
        if dist[node] == limit:
            continue
        for link in topology.out_links(node):
            nxt = link.dst
            if topology.kind(nxt) is NodeKind.RU_SITE and nxt not in dist:
                dist[nxt] = dist[node] + 1
                queue.append(nxt)
    return dist


def coverage_expansion(
    state_in_failure: NetworkState,
    report: DisruptionReport,
    params: CoverageExpansionParams,
    instance: SystemInstance,
) -> RecoveryOutcome:
    topo = instance.topology
    headroom_bps = int(params.capacity_headroom * peak_cell_capacity(instance.radio_config))
    budget: dict[int, int] = {}
    restored: dict[int, int] = {}
    for ru in sorted(report.ru_disrupted):
        dist = ru_hop_distances(topo, ru, params.neighbor_hops)
        neighbors = sorted(
            (d, r) for r, d in dist.items()
            if r != ru and state_in_failure.ru_status.get(r) is RuStatus.OPERATIONAL
        )
        gained = 0
        users = sorted(instance.radio(ru).users, key=lambda u: (-u.rate_bps, u.id))
        for user in users:
            served = int(params.rate_penalty * user.rate_bps)
            if served == 0:
                continue
            for _, nb in neighbors:
                left = budget.setdefault(nb, headroom_bps)
                if served <= left:
                    budget[nb] = left - served
                    gained += served
                    break
        if gained:
            restored[ru] = gained
    utility = compute_utility(state_in_failure, instance) + sum(restored.values())
    return RecoveryOutcome("coverage_expansion", state_in_failure, utility, restored)
