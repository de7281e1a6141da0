"""Recovery ILP: per-RU candidate chains and the explicit binary program behind them.

Each disrupted RU gets a list of candidate options. A recovered option fixes
CU cloud, DU cloud and the three segment paths; an unrecovered option keeps
surviving functions where they are. Paths that break a latency budget or
cross a failed cloud never become candidates. Live segments of a disrupted
chain are reused rather than re-routed, so they cost no new bandwidth.

The explicit model (variables ``g, h, a, w, x, y, z`` and constraint rows) is
built from the same candidate sets; the branch-and-bound search works on the
options directly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from ..failure import DisruptionReport
from ..ran_model import NetworkState, SystemInstance, path_is_up, within_budget
from ..topology import Path
from .plan import Decision

__all__ = ["Option", "RuCandidates", "Row", "RecoveryModel", "build_model", "ru_candidates"]


@dataclass(frozen=True)
class Option:
    recovered: bool
    cu: Optional[int]
    du: Optional[int]
    bh: Optional[Path]
    mh: Optional[Path]
    fh: Optional[Path]
    compute: tuple[tuple[int, float], ...]  # new load per cloud
    bandwidth: tuple[tuple[int, int], ...]  # new traffic per link
    latency_s: float = 0.0

    def decision(self, ru: int) -> Decision:
        if self.recovered:
            return Decision(ru, True, self.cu, self.du, self.bh, self.mh, self.fh)
        return Decision(ru, False, None, None, self.bh, None, self.fh)


@dataclass(frozen=True)
class RuCandidates:
    ru: int
    demand_bps: int
    pinned_cu: Optional[int]
    pinned_du: Optional[int]
    cu_clouds: tuple[int, ...]
    du_clouds: tuple[int, ...]
    bh_paths: tuple[Path, ...]  # candidates for x (alive path only, when reused)
    mh_paths: tuple[Path, ...]
    fh_paths: tuple[Path, ...]
    reuse: tuple[str, ...]  # segments whose live path is kept
    recovered: tuple[Option, ...]
    unrecovered: tuple[Option, ...]
    cu_load: float = 0.0
    du_load: float = 0.0

    @property
    def needs_cu(self) -> bool:
        return self.pinned_cu is None

    @property
    def needs_du(self) -> bool:
        return self.pinned_du is None


@dataclass(frozen=True)
class Row:
    family: str
    coeffs: tuple[tuple[int, float], ...]
    sense: str  # "<=", ">=", "=="
    rhs: float

    def satisfied(self, values) -> bool:
        lhs = sum(c * values[i] for i, c in self.coeffs)
        if self.sense == "<=":
            return lhs <= self.rhs + 1e-9
        if self.sense == ">=":
            return lhs >= self.rhs - 1e-9
        return abs(lhs - self.rhs) <= 1e-9


@dataclass
class RecoveryModel:
    rus: tuple[RuCandidates, ...]
    residual_compute: dict[int, float]
    residual_bw: dict[int, float]
    variables: list[tuple] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    objective: dict[int, int] = field(default_factory=dict)

    @property
    def index(self) -> dict[tuple, int]:
        idx = self.__dict__.get("_index")
        if idx is None or len(idx) != len(self.variables):
            idx = {v: i for i, v in enumerate(self.variables)}
            self.__dict__["_index"] = idx
        return idx

    def count(self, kind: str) -> int:
        return sum(1 for v in self.variables if v[0] == kind)

    def assignment(self, choices: dict[int, Option]) -> list[int]:
        """0/1 vector for the given per-RU options (missing RUs unrecovered)."""
        values = [0] * len(self.variables)
        idx = self.index
        for cand in self.rus:
            opt = choices.get(cand.ru) or cand.unrecovered[0]
            r = cand.ru
            cu = opt.cu if opt.recovered else cand.pinned_cu
            du = opt.du if opt.recovered else cand.pinned_du
            if cu is not None:
                values[idx[("g", r, cu)]] = 1
            if du is not None:
                values[idx[("h", r, du)]] = 1
            if opt.recovered:
                values[idx[("a", r)]] = 1
                values[idx[("w", r, cu, du)]] = 1
            for seg, var in (("bh", "x"), ("mh", "y"), ("fh", "z")):
                path = getattr(opt, seg)
                if path is None and not opt.recovered and seg != "mh" and seg in cand.reuse:
                    path = _reused(cand, seg)
                if path is not None:
                    values[idx[(var, r, path.links, path.nodes)]] = 1
        return values

    def violated_rows(self, values) -> list[Row]:
        return [row for row in self.rows if not row.satisfied(values)]

    def objective_value(self, values) -> int:
        return sum(coef * values[i] for i, coef in self.objective.items())


def _reused(cand: RuCandidates, seg: str) -> Path:
    return {"bh": cand.bh_paths, "mh": cand.mh_paths, "fh": cand.fh_paths}[seg][0]


def _aggregate(pairs) -> tuple:
    acc: dict = {}
    for key, amount in pairs:
        acc[key] = acc.get(key, 0) + amount
    return tuple(sorted(acc.items()))


def ru_candidates(ru: int, report: DisruptionReport, instance: SystemInstance, state: NetworkState) -> RuCandidates:
    topo = instance.topology
    dem = instance.demand[ru]
    up = report.clouds_up
    up_sorted = sorted(up)
    pinned_cu = report.surviving_cu.get(ru)
    pinned_du = report.surviving_du.get(ru)
    kept = report.surviving_routes.get(ru)
    cu_clouds = (pinned_cu,) if pinned_cu is not None else tuple(up_sorted)
    du_clouds = (pinned_du,) if pinned_du is not None else tuple(up_sorted)

    def usable(paths, budget):
        return [p for p in paths if path_is_up(topo, p, up) and within_budget(p.latency_s, budget)]

    reuse = []
    if kept is not None:
        reuse = [seg for seg, _ in kept.segments()]

    def seg_paths(seg: str, src: int, dst: int) -> list[Path]:
        if seg in reuse:
            alive = getattr(kept, seg)
            return [alive] if (alive.src, alive.dst) == (src, dst) else []
        budget = {"bh": dem.bh_lat_s, "mh": dem.mh_lat_s, "fh": dem.fh_lat_s}[seg]
        return usable(topo.paths(src, dst), budget)

    bh_by_cu = {cu: seg_paths("bh", topo.core, cu) for cu in cu_clouds}
    fh_by_du = {du: seg_paths("fh", du, ru) for du in du_clouds}
    mh_by_pair = {
        (cu, du): seg_paths("mh", cu, du) for cu in cu_clouds for du in du_clouds if bh_by_cu[cu] and fh_by_du[du]
    }

    options = []
    traffic = {"bh": dem.bh_bps, "mh": dem.mh_bps, "fh": dem.fh_bps}
    for (cu, du), mhs in mh_by_pair.items():
        compute = []
        if pinned_cu is None:
            compute.append((cu, dem.cu_load))
        if pinned_du is None:
            compute.append((du, dem.du_load))
        compute = _aggregate(compute)
        for bh, mh, fh in itertools.product(bh_by_cu[cu], mhs, fh_by_du[du]):
            bw = []
            for seg, path in (("bh", bh), ("mh", mh), ("fh", fh)):
                if seg not in reuse:
                    bw.extend((l, traffic[seg]) for l in path.links)
            options.append(
                Option(True, cu, du, bh, mh, fh, compute, _aggregate(bw), bh.latency_s + mh.latency_s + fh.latency_s)
            )
    options.sort(key=lambda o: (o.latency_s, o.cu, o.du, o.bh.sort_key(), o.mh.sort_key(), o.fh.sort_key()))

    # A survivor whose own segment died must still be routed when unrecovered.
    forced = []
    if pinned_cu is not None and "bh" not in reuse:
        forced.append(("bh", bh_by_cu[pinned_cu]))
    if pinned_du is not None and "fh" not in reuse:
        forced.append(("fh", fh_by_du[pinned_du]))
    unrecovered = []
    for combo in itertools.product(*(paths for _, paths in forced)):
        routed = dict(zip((seg for seg, _ in forced), combo))
        bw = []
        for seg, path in routed.items():
            bw.extend((l, traffic[seg]) for l in path.links)
        unrecovered.append(
            Option(False, None, None, routed.get("bh"), None, routed.get("fh"), (), _aggregate(bw),
                   sum(p.latency_s for p in routed.values()))
        )
    unrecovered.sort(key=lambda o: (o.latency_s, o.bandwidth))

    bh_paths = sorted({p for ps in bh_by_cu.values() for p in ps}, key=lambda p: (p.dst, p.sort_key()))
    mh_paths = sorted({p for ps in mh_by_pair.values() for p in ps}, key=lambda p: (p.src, p.dst, p.sort_key()))
    fh_paths = sorted({p for ps in fh_by_du.values() for p in ps}, key=lambda p: (p.src, p.sort_key()))
    return RuCandidates(
        ru=ru,
        demand_bps=instance.ru_demand_bps(ru),
        pinned_cu=pinned_cu,
        pinned_du=pinned_du,
        cu_clouds=cu_clouds,
        du_clouds=du_clouds,
        bh_paths=tuple(bh_paths),
        mh_paths=tuple(mh_paths),
        fh_paths=tuple(fh_paths),
        reuse=tuple(reuse),
        recovered=tuple(options),
        unrecovered=tuple(unrecovered),
        cu_load=dem.cu_load,
        du_load=dem.du_load,
    )


def build_model(
    report: DisruptionReport,
    instance: SystemInstance,
    state_in_failure: NetworkState,
    materialize: bool = True,
) -> RecoveryModel:
    """Recovery model for the disrupted RUs of ``report``.

    With ``materialize=False`` only the candidate sets are built, which is all
    the branch-and-bound needs.
    """
    rus = tuple(ru_candidates(ru, report, instance, state_in_failure) for ru in sorted(report.ru_disrupted))
    residual_compute = {c: state_in_failure.residual_compute[c] for c in sorted(report.clouds_up)}
    residual_bw = dict(state_in_failure.residual_bw)
    model = RecoveryModel(rus, residual_compute, residual_bw)
    if materialize:
        _materialize(model, instance)
    return model


def _materialize(model: RecoveryModel, instance: SystemInstance) -> None:
    variables: list[tuple] = []
    idx: dict[tuple, int] = {}

    def var(*name) -> int:
        if name not in idx:
            idx[name] = len(variables)
            variables.append(name)
        return idx[name]

    rows: list[Row] = []
    compute_terms: dict[int, list] = {c: [] for c in model.residual_compute}
    bw_terms: dict[int, list] = {}

    for cand in model.rus:
        r = cand.ru
        dem = instance.demand[r]
        g = {n: var("g", r, n) for n in cand.cu_clouds}
        h = {n: var("h", r, n) for n in cand.du_clouds}
        a = var("a", r)
        w = {(m, n): var("w", r, m, n) for m in cand.cu_clouds for n in cand.du_clouds}
        x = {p: var("x", r, p.links, p.nodes) for p in cand.bh_paths}
        y = {p: var("y", r, p.links, p.nodes) for p in cand.mh_paths}
        z = {p: var("z", r, p.links, p.nodes) for p in cand.fh_paths}
        model.objective[a] = cand.demand_bps

        rows.append(Row("cu-uniqueness", tuple((v, 1) for v in g.values()), "<=", 1))
        rows.append(Row("du-uniqueness", tuple((v, 1) for v in h.values()), "<=", 1))
        if cand.pinned_cu is not None:
            rows.append(Row("pinned-survivors", ((g[cand.pinned_cu], 1),), ">=", 1))
        if cand.pinned_du is not None:
            rows.append(Row("pinned-survivors", ((h[cand.pinned_du], 1),), ">=", 1))
        if cand.needs_cu:
            for n, v in g.items():
                compute_terms[n].append((v, dem.cu_load))
        if cand.needs_du:
            for n, v in h.items():
                compute_terms[n].append((v, dem.du_load))

        # Chain indicator and the g*h product.
        rows.append(Row("routing", ((a, 1),) + tuple((v, -1) for v in g.values()), "<=", 0))
        rows.append(Row("routing", ((a, 1),) + tuple((v, -1) for v in h.values()), "<=", 0))
        rows.append(Row("routing", ((a, 1),) + tuple((v, -1) for v in w.values()), "==", 0))
        for (m, n), v in w.items():
            rows.append(Row("routing", ((v, 1), (g[m], -1)), "<=", 0))
            rows.append(Row("routing", ((v, 1), (h[n], -1)), "<=", 0))
            rows.append(Row("routing", ((v, 1), (g[m], -1), (h[n], -1)), ">=", -1))

        # A segment is routed exactly when its function is placed.
        rows.append(Row("routing", tuple((v, 1) for v in x.values()) + tuple((v, -1) for v in g.values()), "==", 0))
        rows.append(Row("routing", tuple((v, 1) for v in y.values()) + ((a, -1),), "==", 0))
        rows.append(Row("routing", tuple((v, 1) for v in z.values()) + tuple((v, -1) for v in h.values()), "==", 0))
        for p, v in x.items():
            rows.append(Row("routing", ((v, 1), (g[p.dst], -1)), "<=", 0))
        for p, v in y.items():
            rows.append(Row("routing", ((v, 1), (w[(p.src, p.dst)], -1)), "<=", 0))
        for p, v in z.items():
            rows.append(Row("routing", ((v, 1), (h[p.src], -1)), "<=", 0))

        for seg, sel, traffic in (("bh", x, dem.bh_bps), ("mh", y, dem.mh_bps), ("fh", z, dem.fh_bps)):
            if seg in cand.reuse:
                continue
            for p, v in sel.items():
                for link in p.links:
                    bw_terms.setdefault(link, []).append((v, traffic))

    for n, terms in compute_terms.items():
        if terms:
            rows.append(Row("compute-capacity", tuple(terms), "<=", model.residual_compute[n]))
    for link in sorted(bw_terms):
        rows.append(Row("link-bandwidth", tuple(bw_terms[link]), "<=", model.residual_bw[link]))
    model.variables = variables
    model.rows = rows
