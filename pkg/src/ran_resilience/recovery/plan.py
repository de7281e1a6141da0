"""Recovery plans, their independent verification, and application to a state."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

from ..failure import DisruptionReport
from ..ran_model import (
    NetworkState,
    Routes,
    RuStatus,
    SystemInstance,
    segment_budget,
    segment_traffic,
    within_budget,
)
from ..topology import NodeKind, Path, Topology, path_latency

__all__ = [
    "Decision",
    "SolveStats",
    "RecoveryPlan",
    "ConstraintReport",
    "PlanRejected",
    "FAMILIES",
    "verify_plan",
    "apply_plan",
    "plan_to_dict",
    "plan_from_dict",
]

FAMILIES = (
    "cu-uniqueness",
    "du-uniqueness",
    "pinned-survivors",
    "compute-capacity",
    "routing",
    "link-bandwidth",
    "backhaul-latency",
    "midhaul-latency",
    "fronthaul-latency",
    "objective",
)
_LATENCY_FAMILY = {"bh": "backhaul-latency", "mh": "midhaul-latency", "fh": "fronthaul-latency"}


@dataclass(frozen=True)
class Decision:
    """Outcome for one disrupted RU.

    A recovered decision carries the full chain: CU and DU clouds and the
    backhaul, midhaul and fronthaul paths. An unrecovered decision only
    carries routes that a surviving function is forced to keep.
    """

    ru: int
    recovered: bool
    cu: Optional[int] = None
    du: Optional[int] = None
    bh: Optional[Path] = None
    mh: Optional[Path] = None
    fh: Optional[Path] = None


@dataclass(frozen=True)
class SolveStats:
    nodes_explored: int = 0
    best_bound: int = 0
    wall_time_s: float = 0.0
    proven_optimal: bool = True


@dataclass(frozen=True)
class RecoveryPlan:
    decisions: tuple[Decision, ...] = ()
    objective_value: int = 0
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def recovered(self) -> list[int]:
        return sorted({d.ru for d in self.decisions if d.recovered})


@dataclass
class ConstraintReport:
    violations: dict[str, list[str]] = field(default_factory=lambda: {f: [] for f in FAMILIES})

    def add(self, family: str, message: str) -> None:
        self.violations.setdefault(family, []).append(message)

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())

    @property
    def failed_families(self) -> list[str]:
        return [f for f, v in self.violations.items() if v]

    def lines(self) -> list[str]:
        out = []
        for family, msgs in self.violations.items():
            out.append(f"{'PASS' if not msgs else 'FAIL'} {family}")
            out.extend(f"    {m}" for m in msgs)
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


class PlanRejected(ValueError):
    def __init__(self, report: ConstraintReport):
        self.report = report
        super().__init__("plan violates: " + ", ".join(report.failed_families))


# ---------------------------------------------------------------------- #


def _walk_problems(topology: Topology, path: Path) -> list[str]:
    problems = []
    if len(path.nodes) != len(path.links) + 1:
        return ["node and link counts disagree"]
    if len(set(path.nodes)) != len(path.nodes):
        problems.append("path repeats a node")
    for i, link_id in enumerate(path.links):
        if not 0 <= link_id < len(topology.links):
            return [f"unknown link {link_id}"]
        link = topology.links[link_id]
        if (link.src, link.dst) != (path.nodes[i], path.nodes[i + 1]):
            problems.append(f"link {link_id} does not join {path.nodes[i]}->{path.nodes[i + 1]}")
    return problems


def _final_chains(plan: RecoveryPlan, report: DisruptionReport, state: NetworkState, rep: ConstraintReport):
    """Per-RU (cu, du, routes) after the plan, first decision per RU winning."""
    first: dict[int, Decision] = {}
    for d in plan.decisions:
        first.setdefault(d.ru, d)
    chains = {}
    for ru in state.ru_status:
        d = first.get(ru)
        if d is None or ru not in report.ru_disrupted:
            chains[ru] = (state.cu_at.get(ru), state.du_at.get(ru), state.routes.get(ru, Routes()))
        elif d.recovered:
            chains[ru] = (d.cu, d.du, Routes(d.bh, d.mh, d.fh))
        else:
            kept = state.routes.get(ru, Routes())
            chains[ru] = (
                state.cu_at.get(ru),
                state.du_at.get(ru),
                Routes(d.bh or kept.bh, kept.mh, d.fh or kept.fh),
            )
    return first, chains


def verify_plan(
    plan: RecoveryPlan,
    report: DisruptionReport,
    instance: SystemInstance,
    state_in_failure: NetworkState,
) -> ConstraintReport:
    """Re-check a plan against raw capacities, latencies and placements.

    Loads are recomputed from placements and routes; residual fields of the
    state are never consulted.
    """
    topo = instance.topology
    rep = ConstraintReport()
    up = report.clouds_up

    by_ru: dict[int, list[Decision]] = {}
    for d in plan.decisions:
        by_ru.setdefault(d.ru, []).append(d)
    for ru, ds in sorted(by_ru.items()):
        if sum(d.cu is not None for d in ds) > 1:
            rep.add("cu-uniqueness", f"RU {ru}: {sum(d.cu is not None for d in ds)} CU placements")
        if sum(d.du is not None for d in ds) > 1:
            rep.add("du-uniqueness", f"RU {ru}: {sum(d.du is not None for d in ds)} DU placements")
        if len(ds) > 1 and not any(
            sum(getattr(d, f) is not None for d in ds) > 1 for f in ("cu", "du")
        ):
            rep.add("cu-uniqueness", f"RU {ru}: {len(ds)} decision records")
        if ru not in report.ru_disrupted:
            rep.add("routing", f"RU {ru}: decision for an RU that is not disrupted")

    first, chains = _final_chains(plan, report, state_in_failure, rep)

    for ru, d in sorted(first.items()):
        if ru not in report.ru_disrupted:
            continue
        pinned_cu, pinned_du = report.surviving_cu.get(ru), report.surviving_du.get(ru)
        if d.recovered:
            if pinned_cu is not None and d.cu != pinned_cu:
                rep.add("pinned-survivors", f"RU {ru}: CU moved from surviving cloud {pinned_cu} to {d.cu}")
            if pinned_du is not None and d.du != pinned_du:
                rep.add("pinned-survivors", f"RU {ru}: DU moved from surviving cloud {pinned_du} to {d.du}")
        else:
            if d.cu not in (None, pinned_cu) or d.du not in (None, pinned_du):
                rep.add("pinned-survivors", f"RU {ru}: unrecovered decision places new functions")
            if d.mh is not None:
                rep.add("routing", f"RU {ru}: unrecovered decision routes a midhaul")

        if not d.recovered:
            continue
        dem = instance.demand[ru]
        if d.cu is None or d.du is None:
            rep.add("routing", f"RU {ru}: recovered without both CU and DU")
            continue
        for cloud, name in ((d.cu, "CU"), (d.du, "DU")):
            if cloud not in up:
                rep.add("routing", f"RU {ru}: {name} on non-operational cloud {cloud}")
        expected = {"bh": (topo.core, d.cu), "mh": (d.cu, d.du), "fh": (d.du, ru)}
        for seg in ("bh", "mh", "fh"):
            path = getattr(d, seg)
            if path is None:
                rep.add("routing", f"RU {ru}: no {seg} path selected")
                continue
            if (path.src, path.dst) != expected[seg]:
                rep.add("routing", f"RU {ru}: {seg} path joins {path.src}->{path.dst}, expected {expected[seg]}")
            walk = _walk_problems(topo, path)
            if walk:
                rep.add("routing", f"RU {ru}: {seg} path invalid ({'; '.join(walk)})")
                continue
            for node in path.nodes:
                if topo.kind(node) is NodeKind.CLOUD and node not in up:
                    rep.add("routing", f"RU {ru}: {seg} path crosses failed cloud {node}")
                    break
            latency = path_latency(topo.links[i] for i in path.links)
            if not within_budget(latency, segment_budget(dem, seg)):
                rep.add(
                    _LATENCY_FAMILY[seg],
                    f"RU {ru}: {seg} latency {latency * 1e3:.4f} ms exceeds {segment_budget(dem, seg) * 1e3:.4f} ms",
                )

    # Compute capacity over every function that will be running.
    used = {c.id: 0.0 for c in instance.clouds}
    for ru, (cu, du, _) in chains.items():
        dem = instance.demand[ru]
        for cloud, load in ((cu, dem.cu_load), (du, dem.du_load)):
            if cloud is None:
                continue
            if cloud not in used:
                rep.add("compute-capacity", f"RU {ru}: unknown cloud {cloud}")
                continue
            used[cloud] += load
    for cloud in instance.clouds:
        cap = cloud.capacity_cu if cloud.id in up else 0.0
        if used[cloud.id] > cap + 1e-9:
            rep.add("compute-capacity", f"cloud {cloud.id}: load {used[cloud.id]:g} exceeds capacity {cap:g}")

    # Link bandwidth over every installed route.
    load = {l.index: 0 for l in topo.links}
    for ru, (_, _, routes) in chains.items():
        dem = instance.demand[ru]
        for seg, path in routes.segments():
            for link in path.links:
                if link in load:
                    load[link] += segment_traffic(dem, seg)
    for link in topo.links:
        if load[link.index] > link.capacity_bps:
            rep.add(
                "link-bandwidth",
                f"link {link.index} ({link.src}->{link.dst}): {load[link.index]:.6g} bps exceeds {link.capacity_bps:.6g}",
            )

    gain = sum(instance.ru_demand_bps(ru) for ru, d in first.items() if d.recovered and ru in report.ru_disrupted)
    if gain != plan.objective_value:
        rep.add("objective", f"objective {plan.objective_value} != recovered demand {gain}")
    return rep


def apply_plan(
    state_in_failure: NetworkState,
    plan: RecoveryPlan,
    instance: SystemInstance,
    report: DisruptionReport,
) -> NetworkState:
    """Instantiate the plan's functions and routes; raises :class:`PlanRejected` if it does not verify."""
    check = verify_plan(plan, report, instance, state_in_failure)
    if not check.passed:
        raise PlanRejected(check)
    state = state_in_failure.copy()
    for d in plan.decisions:
        dem = instance.demand[d.ru]
        old_routes = state.routes.get(d.ru, Routes())
        if d.recovered:
            new_routes = Routes(d.bh, d.mh, d.fh)
            for cloud, load, old in ((d.cu, dem.cu_load, state.cu_at.get(d.ru)), (d.du, dem.du_load, state.du_at.get(d.ru))):
                if old is None:
                    state.residual_compute[cloud] -= load
            state.cu_at[d.ru], state.du_at[d.ru] = d.cu, d.du
            state.ru_status[d.ru] = RuStatus.OPERATIONAL
        else:
            new_routes = Routes(d.bh or old_routes.bh, old_routes.mh, d.fh or old_routes.fh)
        for seg in ("bh", "mh", "fh"):
            old, new = getattr(old_routes, seg), getattr(new_routes, seg)
            if old == new:
                continue
            traffic = segment_traffic(dem, seg)
            if old is not None:
                for link in old.links:
                    state.residual_bw[link] += traffic
            if new is not None:
                for link in new.links:
                    state.residual_bw[link] -= traffic
        state.routes[d.ru] = new_routes
    return state


# ---------------------------------------------------------------------- #
# JSON


def _path_to_dict(path: Optional[Path]):
    if path is None:
        return None
    return {"nodes": list(path.nodes), "links": list(path.links)}


def _path_from_dict(raw, topology: Topology) -> Optional[Path]:
    if raw is None:
        return None
    nodes = tuple(int(n) for n in raw["nodes"])
    links = tuple(int(l) for l in raw["links"])
    latency = path_latency(topology.links[i] for i in links if 0 <= i < len(topology.links))
    return Path(nodes, links, latency)


def plan_to_dict(plan: RecoveryPlan) -> dict[str, Any]:
    return {
        "objective_value": plan.objective_value,
        "decisions": [
            {
                "ru": d.ru,
                "status": "recovered" if d.recovered else "unrecovered",
                "cu": d.cu,
                "du": d.du,
                "bh_path": _path_to_dict(d.bh),
                "mh_path": _path_to_dict(d.mh),
                "fh_path": _path_to_dict(d.fh),
            }
            for d in plan.decisions
        ],
        "stats": {
            "nodes_explored": plan.stats.nodes_explored,
            "best_bound": plan.stats.best_bound,
            "wall_time_s": plan.stats.wall_time_s,
            "proven_optimal": plan.stats.proven_optimal,
        },
    }


def plan_from_dict(doc: Mapping[str, Any], topology: Topology) -> RecoveryPlan:
    decisions = []
    for raw in doc.get("decisions", []):
        status = raw.get("status", "unrecovered")
        if status not in ("recovered", "unrecovered"):
            raise ValueError(f"unknown decision status {status!r}")
        decisions.append(
            Decision(
                ru=int(raw["ru"]),
                recovered=status == "recovered",
                cu=raw.get("cu"),
                du=raw.get("du"),
                bh=_path_from_dict(raw.get("bh_path"), topology),
                mh=_path_from_dict(raw.get("mh_path"), topology),
                fh=_path_from_dict(raw.get("fh_path"), topology),
            )
        )
    s = doc.get("stats") or {}
    stats = SolveStats(
        nodes_explored=int(s.get("nodes_explored", 0)),
        best_bound=int(s.get("best_bound", doc.get("objective_value", 0))),
        wall_time_s=float(s.get("wall_time_s", 0.0)),
        proven_optimal=bool(s.get("proven_optimal", False)),
    )
    return RecoveryPlan(tuple(decisions), int(doc.get("objective_value", 0)), stats)
