"""Radio units, users, demand profiles, network state and aggregate utility."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional

import numpy as np

from .topology import NodeKind, Path, Topology

__all__ = [
    "RadioConfig",
    "UserDemand",
    "RadioUnit",
    "RuDemand",
    "DemandProfile",
    "CloudSite",
    "InstanceParams",
    "SystemInstance",
    "RuStatus",
    "Routes",
    "NetworkState",
    "InfeasibleInstance",
    "peak_cell_capacity",
    "populate_users",
    "default_demand_profile",
    "build_instance",
    "initial_placement",
    "compute_utility",
    "within_budget",
    "link_is_up",
    "path_is_up",
    "audit_state",
]

# Relative slack on latency budgets so that e.g. 5 x 0.05 ms still meets 0.25 ms.
LATENCY_RTOL = 1e-9

# Maximum transmission bandwidth configuration (PRBs) by SCS and channel bandwidth, FR1.
_NRB_TABLE = {
    15e3: {5e6: 25, 10e6: 52, 15e6: 79, 20e6: 106, 25e6: 133, 30e6: 160, 40e6: 216, 50e6: 270},
    30e3: {
        5e6: 11, 10e6: 24, 15e6: 38, 20e6: 51, 25e6: 65, 30e6: 78, 40e6: 106, 50e6: 133,
        60e6: 162, 70e6: 189, 80e6: 217, 90e6: 245, 100e6: 273,
    },
    60e3: {
        10e6: 11, 15e6: 18, 20e6: 24, 25e6: 31, 30e6: 38, 40e6: 51, 50e6: 65, 60e6: 79,
        70e6: 93, 80e6: 107, 90e6: 121, 100e6: 135,
    },
}


class InfeasibleInstance(RuntimeError):
    def __init__(self, ru: int, message: str):
        self.ru = ru
        super().__init__(f"RU {ru}: {message}")


def within_budget(latency_s: float, budget_s: float) -> bool:
    return latency_s <= budget_s * (1.0 + LATENCY_RTOL)


@dataclass(frozen=True)
class RadioConfig:
    bandwidth_hz: float = 100e6
    antenna_ports: int = 32
    mimo_layers: int = 8
    modulation_bits: int = 8
    coding_overhead: float = 0.14
    subcarrier_spacing_hz: float = 30e3
    max_code_rate: float = 948 / 1024
    fronthaul_bps: float = 22e9

    def __post_init__(self):
        for name in ("bandwidth_hz", "antenna_ports", "mimo_layers", "subcarrier_spacing_hz",
                     "max_code_rate", "fronthaul_bps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"RadioConfig.{name} must be positive")
        if self.modulation_bits not in (2, 4, 6, 8):
            raise ValueError("RadioConfig.modulation_bits must be one of 2, 4, 6, 8")
        if not 0.0 <= self.coding_overhead < 1.0:
            raise ValueError("RadioConfig.coding_overhead must lie in [0, 1)")

    @property
    def n_prb(self) -> int:
        table = _NRB_TABLE.get(self.subcarrier_spacing_hz, {})
        if self.bandwidth_hz in table:
            return table[self.bandwidth_hz]
        # Off-table channel: assume ~2% guard band per edge.
        return max(1, int(self.bandwidth_hz * 0.96 // (12 * self.subcarrier_spacing_hz)))

    @property
    def usable_symbol_rate(self) -> float:
        """Resource elements per second across the carrier (14 symbols per slot)."""
        numerology = round(math.log2(self.subcarrier_spacing_hz / 15e3))
        symbol_duration = 1e-3 / (14 * 2**numerology)
        return self.n_prb * 12 / symbol_duration


def peak_cell_capacity(cfg: RadioConfig) -> float:
    """Approximate peak downlink rate of one RU in bits/second."""
    return (
        cfg.mimo_layers
        * cfg.modulation_bits
        * cfg.max_code_rate
        * cfg.usable_symbol_rate
        * (1.0 - cfg.coding_overhead)
    )


@dataclass(frozen=True)
class UserDemand:
    id: int
    rate_bps: int

    def __post_init__(self):
        if self.rate_bps < 0:
            raise ValueError("user rate must be non-negative")


@dataclass(frozen=True)
class RadioUnit:
    id: int
    users: tuple[UserDemand, ...] = ()

    @property
    def demand_bps(self) -> int:
        return sum(u.rate_bps for u in self.users)


@dataclass(frozen=True)
class RuDemand:
    cu_load: float
    du_load: float
    bh_bps: int
    mh_bps: int
    fh_bps: int
    bh_lat_s: float
    mh_lat_s: float
    fh_lat_s: float

    def __post_init__(self):
        values = (self.cu_load, self.du_load, self.bh_bps, self.mh_bps, self.fh_bps,
                  self.bh_lat_s, self.mh_lat_s, self.fh_lat_s)
        if any(v < 0 for v in values):
            raise ValueError("demand values must be non-negative")
        if not self.fh_lat_s <= self.mh_lat_s <= self.bh_lat_s:
            raise ValueError("latency budgets must tighten towards the RU (fh <= mh <= bh)")


DemandProfile = Mapping[int, RuDemand]


@dataclass(frozen=True)
class CloudSite:
    id: int
    capacity_cu: float

    def __post_init__(self):
        if self.capacity_cu < 0:
            raise ValueError("cloud capacity must be non-negative")


@dataclass(frozen=True)
class InstanceParams:
    """Knobs for synthesising a system instance on top of a topology."""

    users_per_ru: int = 10
    load_factor: float = 0.7
    rate_band_bps: tuple[float, float] = (50e6, 500e6)
    cloud_capacity: float = 6.0
    cu_load: float = 1.0
    du_load: float = 2.0
    midhaul_factor: float = 1.02
    bh_lat_s: float = 10e-3
    mh_lat_s: float = 1.5e-3
    fh_lat_s: float = 0.25e-3
    # "pooled": CUs gather on hub clouds (every ``cu_pool_stride``-th site);
    # "colocated": each CU sits next to its DU.
    cu_placement: str = "pooled"
    cu_pool_stride: int = 4
    radio: RadioConfig = field(default_factory=RadioConfig)

    def __post_init__(self):
        if self.users_per_ru < 0:
            raise ValueError("users_per_ru must be >= 0")
        if not 0.0 <= self.load_factor:
            raise ValueError("load_factor must be >= 0")
        lo, hi = self.rate_band_bps
        if not 0 < lo <= hi:
            raise ValueError("rate band must satisfy 0 < low <= high")
        if self.cu_placement not in ("pooled", "colocated"):
            raise ValueError("cu_placement must be 'pooled' or 'colocated'")
        if self.cu_pool_stride < 1:
            raise ValueError("cu_pool_stride must be >= 1")


@dataclass(frozen=True)
class SystemInstance:
    topology: Topology
    radios: tuple[RadioUnit, ...]
    demand: Mapping[int, RuDemand]
    clouds: tuple[CloudSite, ...]
    radio_config: RadioConfig
    params: InstanceParams = field(default_factory=InstanceParams)

    def __post_init__(self):
        if sorted(r.id for r in self.radios) != sorted(self.topology.ru_sites):
            raise ValueError("need exactly one RadioUnit per RU site")

    @property
    def ru_ids(self) -> list[int]:
        return [r.id for r in self.radios]

    def radio(self, ru: int) -> RadioUnit:
        return self._radio_index[ru]

    @property
    def _radio_index(self) -> dict[int, RadioUnit]:
        idx = self.__dict__.get("_radio_cache")
        if idx is None:
            idx = {r.id: r for r in self.radios}
            object.__setattr__(self, "_radio_cache", idx)
        return idx

    def cloud_capacity(self, cloud: int) -> float:
        idx = self.__dict__.get("_cloud_cache")
        if idx is None:
            idx = {c.id: c.capacity_cu for c in self.clouds}
            object.__setattr__(self, "_cloud_cache", idx)
        return idx[cloud]

    def ru_demand_bps(self, ru: int) -> int:
        return self.radio(ru).demand_bps

    def total_demand_bps(self) -> int:
        return sum(r.demand_bps for r in self.radios)


def _split_integer(total: int, weights: np.ndarray) -> list[int]:
    """Largest-remainder rounding of ``total`` in proportion to ``weights``."""
    if len(weights) == 0:
        return []
    raw = weights / weights.sum() * total
    base = np.floor(raw).astype(np.int64)
    short = int(total - base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return [int(v) for v in base]


def populate_users(
    instance: SystemInstance,
    users_per_ru: int,
    seed: int,
    load_factor: float | None = None,
    rate_band_bps: tuple[float, float] | None = None,
) -> SystemInstance:
    """Attach ``users_per_ru`` users to every RU.

    Rates are drawn uniformly from the band, then rescaled so each RU's
    aggregate equals ``load_factor`` times the peak cell capacity (rounded
    to whole bits/second, split by largest remainder).
    """
    if users_per_ru < 0:
        raise ValueError("users_per_ru must be >= 0")
    load_factor = instance.params.load_factor if load_factor is None else load_factor
    lo, hi = rate_band_bps or instance.params.rate_band_bps
    target = int(round(load_factor * peak_cell_capacity(instance.radio_config)))
    rng = np.random.default_rng(seed)
    radios = []
    next_id = 0
    for ru in sorted(instance.ru_ids):
        draws = rng.uniform(lo, hi, size=users_per_ru)
        rates = _split_integer(target, draws)
        users = tuple(UserDemand(next_id + i, rate) for i, rate in enumerate(rates))
        next_id += users_per_ru
        radios.append(RadioUnit(ru, users))
    return replace(instance, radios=tuple(radios))


def default_demand_profile(instance: SystemInstance) -> dict[int, RuDemand]:
    p = instance.params
    out = {}
    for radio in instance.radios:
        bh = radio.demand_bps
        out[radio.id] = RuDemand(
            cu_load=p.cu_load,
            du_load=p.du_load,
            bh_bps=bh,
            mh_bps=int(round(p.midhaul_factor * bh)),
            fh_bps=int(round(instance.radio_config.fronthaul_bps)),
            bh_lat_s=p.bh_lat_s,
            mh_lat_s=p.mh_lat_s,
            fh_lat_s=p.fh_lat_s,
        )
    return out


def build_instance(topology: Topology, params: InstanceParams | None = None, seed: int = 0) -> SystemInstance:
    """Users, demand profile and cloud sites for ``topology`` in one step."""
    params = params or InstanceParams()
    bare = SystemInstance(
        topology=topology,
        radios=tuple(RadioUnit(r) for r in topology.ru_sites),
        demand={},
        clouds=tuple(CloudSite(c, params.cloud_capacity) for c in topology.clouds),
        radio_config=params.radio,
        params=params,
    )
    populated = populate_users(bare, params.users_per_ru, seed)
    return replace(populated, demand=default_demand_profile(populated))


# ---------------------------------------------------------------------- #
# Network state


class RuStatus(str, Enum):
    OPERATIONAL = "operational"
    DISRUPTED = "disrupted"


@dataclass(frozen=True)
class Routes:
    bh: Optional[Path] = None
    mh: Optional[Path] = None
    fh: Optional[Path] = None

    def segments(self) -> list[tuple[str, Path]]:
        return [(name, p) for name, p in (("bh", self.bh), ("mh", self.mh), ("fh", self.fh)) if p is not None]


@dataclass
class NetworkState:
    cu_at: dict[int, Optional[int]]
    du_at: dict[int, Optional[int]]
    routes: dict[int, Routes]
    cloud_up: frozenset[int]
    ru_status: dict[int, RuStatus]
    residual_compute: dict[int, float]
    residual_bw: dict[int, float]

    def copy(self) -> "NetworkState":
        return NetworkState(
            cu_at=dict(self.cu_at),
            du_at=dict(self.du_at),
            routes=dict(self.routes),
            cloud_up=self.cloud_up,
            ru_status=dict(self.ru_status),
            residual_compute=dict(self.residual_compute),
            residual_bw=dict(self.residual_bw),
        )

    @property
    def operational(self) -> list[int]:
        return sorted(r for r, s in self.ru_status.items() if s is RuStatus.OPERATIONAL)

    @property
    def disrupted(self) -> list[int]:
        return sorted(r for r, s in self.ru_status.items() if s is RuStatus.DISRUPTED)


def link_is_up(topology: Topology, link: int, cloud_up: Iterable[int]) -> bool:
    cloud_up = cloud_up if isinstance(cloud_up, (set, frozenset)) else set(cloud_up)
    l = topology.links[link]
    for end in (l.src, l.dst):
        if topology.kind(end) is NodeKind.CLOUD and end not in cloud_up:
            return False
    return True


def path_is_up(topology: Topology, path: Path, cloud_up: Iterable[int]) -> bool:
    cloud_up = cloud_up if isinstance(cloud_up, (set, frozenset)) else set(cloud_up)
    for node in path.nodes:
        if topology.kind(node) is NodeKind.CLOUD and node not in cloud_up:
            return False
    return True


def segment_traffic(demand: RuDemand, seg: str) -> int:
    return {"bh": demand.bh_bps, "mh": demand.mh_bps, "fh": demand.fh_bps}[seg]


def segment_budget(demand: RuDemand, seg: str) -> float:
    return {"bh": demand.bh_lat_s, "mh": demand.mh_lat_s, "fh": demand.fh_lat_s}[seg]


def _fits(paths: Iterable[tuple[Path, int]], residual_bw: Mapping[int, float]) -> bool:
    need: dict[int, int] = {}
    for path, traffic in paths:
        for link in path.links:
            need[link] = need.get(link, 0) + traffic
    return all(residual_bw[l] >= v for l, v in need.items())


def initial_placement(instance: SystemInstance) -> NetworkState:
    """Greedy nearest-first-fit t0 placement, RUs in ascending id order.

    The DU goes to the nearest cloud (fronthaul latency) that has room and a
    feasible fronthaul path. The CU goes to the nearest cloud to that DU
    (midhaul latency) with room and feasible midhaul and backhaul paths; under
    ``cu_placement="pooled"`` hub clouds are tried before all others. Raises
    :class:`InfeasibleInstance` naming the first RU that cannot be placed.
    """
    topo = instance.topology
    clouds = topo.clouds
    residual_compute = {c.id: float(c.capacity_cu) for c in instance.clouds}
    residual_bw = {l.index: l.capacity_bps for l in topo.links}
    cu_at, du_at, routes, status = {}, {}, {}, {}

    stride = instance.params.cu_pool_stride
    pooled = instance.params.cu_placement == "pooled"

    def cu_rank(du: int, c: int):
        hub = topo.node(c).site % stride == 0
        return (not hub if pooled else False, topo.shortest_latency(c, du), c)
    for ru in sorted(instance.ru_ids):
        dem = instance.demand[ru]
        du_order = sorted(clouds, key=lambda c: (topo.shortest_latency(c, ru), c))
        choice = None
        for du in du_order:
            if residual_compute[du] < dem.du_load:
                continue
            for fh in topo.paths(du, ru):
                if not within_budget(fh.latency_s, dem.fh_lat_s) or not _fits([(fh, dem.fh_bps)], residual_bw):
                    continue
                cu_order = sorted(clouds, key=lambda c: cu_rank(du, c))
                choice = _place_cu(instance, dem, du, fh, cu_order, residual_compute, residual_bw)
                if choice is not None:
                    break
            if choice is not None:
                break
        if choice is None:
            raise InfeasibleInstance(ru, "no cloud pair satisfies compute, bandwidth and latency constraints")
        cu, du, bh, mh, fh = choice
        residual_compute[du] -= dem.du_load
        residual_compute[cu] -= dem.cu_load
        for path, traffic in ((bh, dem.bh_bps), (mh, dem.mh_bps), (fh, dem.fh_bps)):
            for link in path.links:
                residual_bw[link] -= traffic
        cu_at[ru], du_at[ru] = cu, du
        routes[ru] = Routes(bh, mh, fh)
        status[ru] = RuStatus.OPERATIONAL
    return NetworkState(cu_at, du_at, routes, frozenset(clouds), status, residual_compute, residual_bw)


def _place_cu(instance, dem, du, fh, cu_order, residual_compute, residual_bw):
    topo = instance.topology
    for cu in cu_order:
        need = dem.cu_load + (dem.du_load if cu == du else 0.0)
        if residual_compute[cu] < need:
            continue
        for mh in topo.paths(cu, du):
            if not within_budget(mh.latency_s, dem.mh_lat_s):
                continue
            for bh in topo.paths(topo.core, cu):
                if not within_budget(bh.latency_s, dem.bh_lat_s):
                    continue
                if _fits([(bh, dem.bh_bps), (mh, dem.mh_bps), (fh, dem.fh_bps)], residual_bw):
                    return cu, du, bh, mh, fh
    return None


def compute_utility(state: NetworkState, instance: SystemInstance) -> int:
    """Aggregate user throughput of operational RUs, in bits/second."""
    return sum(
        instance.ru_demand_bps(ru) for ru, s in state.ru_status.items() if s is RuStatus.OPERATIONAL
    )


def chain_is_intact(state: NetworkState, instance: SystemInstance, ru: int) -> bool:
    topo = instance.topology
    dem = instance.demand[ru]
    cu, du, routes = state.cu_at.get(ru), state.du_at.get(ru), state.routes.get(ru)
    if cu is None or du is None or routes is None:
        return False
    if cu not in state.cloud_up or du not in state.cloud_up:
        return False
    expected = {"bh": (topo.core, cu), "mh": (cu, du), "fh": (du, ru)}
    for seg in ("bh", "mh", "fh"):
        path = getattr(routes, seg)
        if path is None or (path.src, path.dst) != expected[seg]:
            return False
        if not path_is_up(topo, path, state.cloud_up):
            return False
        if not within_budget(path.latency_s, segment_budget(dem, seg)):
            return False
    return True


def audit_state(state: NetworkState, instance: SystemInstance) -> list[str]:
    """Invariant violations of ``state`` (empty list when consistent)."""
    topo = instance.topology
    problems = []
    used_compute = {c.id: 0.0 for c in instance.clouds}
    for ru in instance.ru_ids:
        dem = instance.demand[ru]
        for where, load in ((state.cu_at.get(ru), dem.cu_load), (state.du_at.get(ru), dem.du_load)):
            if where is not None:
                if where not in state.cloud_up:
                    problems.append(f"RU {ru} has a function on failed cloud {where}")
                used_compute[where] += load
    for cloud in instance.clouds:
        if cloud.id in state.cloud_up:
            expected = cloud.capacity_cu - used_compute[cloud.id]
        else:
            expected = 0.0
        if not math.isclose(state.residual_compute[cloud.id], expected, abs_tol=1e-9):
            problems.append(f"cloud {cloud.id} residual {state.residual_compute[cloud.id]} != {expected}")
        if state.residual_compute[cloud.id] < -1e-9:
            problems.append(f"cloud {cloud.id} residual compute is negative")
    used_bw = {l.index: 0 for l in topo.links}
    for ru, routes in state.routes.items():
        dem = instance.demand[ru]
        for seg, path in routes.segments():
            for link in path.links:
                used_bw[link] += segment_traffic(dem, seg)
    for link in topo.links:
        expected = link.capacity_bps - used_bw[link.index]
        if state.residual_bw[link.index] != expected:
            problems.append(f"link {link.index} residual {state.residual_bw[link.index]} != {expected}")
        if state.residual_bw[link.index] < 0:
            problems.append(f"link {link.index} residual bandwidth is negative")
    for ru in instance.ru_ids:
        intact = chain_is_intact(state, instance, ru)
        operational = state.ru_status[ru] is RuStatus.OPERATIONAL
        if intact != operational:
            problems.append(f"RU {ru} status {state.ru_status[ru].value} but chain intact={intact}")
    return problems
