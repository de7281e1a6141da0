"""Transport graph: RU sites, co-located clouds, the core node, and candidate paths.

Node ids are flat integers. In a ring topology the RU sites act as the
transport switches: ring spans join neighbouring sites, every cloud hangs off
its own site through a site-local link pair, and the core attaches to one site.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

__all__ = [
    "NodeKind",
    "Node",
    "Link",
    "Path",
    "Topology",
    "TopologyParams",
    "TopologyError",
    "TopologyParseError",
    "build_ring_topology",
    "enumerate_paths",
    "k_shortest_paths",
    "load_topology",
    "save_topology",
    "path_latency",
]


class TopologyError(ValueError):
    """Invalid topology (bad argument, broken invariant, unreachable pair)."""


class TopologyParseError(TopologyError):
    """Document does not match the topology schema."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


class NodeKind(str, Enum):
    RU_SITE = "ru_site"
    CLOUD = "cloud"
    CORE = "core"


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    site: int  # ordinal among nodes of the same kind; co-located RU/cloud share it


@dataclass(frozen=True)
class Link:
    index: int
    src: int
    dst: int
    capacity_bps: float
    latency_s: float


@dataclass(frozen=True)
class Path:
    """Simple directed path; ``links`` are link indices into the topology."""

    nodes: tuple[int, ...]
    links: tuple[int, ...]
    latency_s: float

    @property
    def src(self) -> int:
        return self.nodes[0]

    @property
    def dst(self) -> int:
        return self.nodes[-1]

    @property
    def hops(self) -> int:
        return len(self.links)

    def uses(self, link: int) -> bool:
        return link in self.links

    def sort_key(self) -> tuple:
        return (self.latency_s, len(self.links), self.nodes, self.links)


@dataclass(frozen=True)
class TopologyParams:
    link_capacity_bps: float = 100e9
    link_latency_s: float = 0.05e-3
    site_link_capacity_bps: float = 100e9
    site_link_latency_s: float = 0.0
    core_link_capacity_bps: float = 400e9
    core_link_latency_s: float = 0.05e-3
    core_site: int = 0
    paths_k: int = 3


def path_latency(links: Iterable[Link]) -> float:
    """Sum of link latencies, accumulated in path order."""
    total = 0.0
    for link in links:
        total += link.latency_s
    return total


def _dijkstra(
    adjacency: Mapping[int, list[Link]],
    source: int,
    target: int,
    banned_nodes: frozenset[int] | set[int],
    banned_links: set[int],
) -> tuple[tuple[int, ...], tuple[int, ...]] | None:
    # Labels compare by (latency, hops, node sequence, link sequence), which
    # is monotone under extension, so the first settled label at the target is
    # the tie-broken minimum.
    heap = [(0.0, 0, (source,), ())]
    settled: set[int] = set()
    while heap:
        lat, hops, nodes, links = heapq.heappop(heap)
        node = nodes[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == target:
            return nodes, links
        for link in adjacency.get(node, ()):
            nxt = link.dst
            if nxt in settled or nxt in banned_nodes or link.index in banned_links:
                continue
            if nxt in nodes:
                continue
            heapq.heappush(heap, (lat + link.latency_s, hops + 1, nodes + (nxt,), links + (link.index,)))
    return None


def k_shortest_paths(
    links: list[Link],
    adjacency: Mapping[int, list[Link]],
    source: int,
    target: int,
    k: int,
) -> list[Path]:
    """Yen's k lowest-latency simple paths from ``source`` to ``target``.

    Ties are broken by fewer hops, then lexicographic node order, then link
    order. Returns fewer than ``k`` paths when fewer exist, and an empty list
    when the pair is disconnected.
    """
    if k < 1:
        raise TopologyError("k must be >= 1")

    def make(nodes, link_ids) -> Path:
        return Path(tuple(nodes), tuple(link_ids), path_latency(links[i] for i in link_ids))

    if source == target:
        return [Path((source,), (), 0.0)]
    first = _dijkstra(adjacency, source, target, frozenset(), set())
    if first is None:
        return []
    found = [make(*first)]
    candidates: list[tuple[tuple, Path]] = []
    seen = {found[0].links}
    while len(found) < k:
        prev = found[-1]
        for i in range(len(prev.nodes) - 1):
            spur = prev.nodes[i]
            root_nodes = prev.nodes[: i + 1]
            root_links = prev.links[:i]
            banned_links = {
                p.links[i] for p in found if p.nodes[: i + 1] == root_nodes and p.links[:i] == root_links
            }
            spur_path = _dijkstra(adjacency, spur, target, frozenset(root_nodes[:-1]), banned_links)
            if spur_path is None:
                continue
            link_ids = root_links + spur_path[1]
            if link_ids in seen:
                continue
            seen.add(link_ids)
            cand = make(root_nodes[:-1] + spur_path[0], link_ids)
            heapq.heappush(candidates, (cand.sort_key(), cand))
        if not candidates:
            break
        found.append(heapq.heappop(candidates)[1])
    found.sort(key=Path.sort_key)
    return found


class Topology:
    """Immutable transport graph with a lazily filled k-shortest path catalog.

    ``paths(v, w)`` computes and memoizes on first access; the memo never
    changes an answer, so instances are safe to share between readers.
    """

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link], paths_k: int = 3):
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.links: tuple[Link, ...] = tuple(links)
        self.paths_k = int(paths_k)
        self._by_id = {n.id: n for n in self.nodes}
        self._adjacency: dict[int, list[Link]] = {n.id: [] for n in self.nodes}
        for link in self.links:
            self._adjacency[link.src].append(link)
        self._catalog: dict[tuple[int, int], tuple[Path, ...]] = {}
        self._distances: dict[int, dict[int, float]] = {}
        self.validate()

    # ------------------------------------------------------------------ #
    @property
    def core(self) -> int:
        return next(n.id for n in self.nodes if n.kind is NodeKind.CORE)

    @property
    def ru_sites(self) -> list[int]:
        return [n.id for n in self.nodes if n.kind is NodeKind.RU_SITE]

    @property
    def clouds(self) -> list[int]:
        return [n.id for n in self.nodes if n.kind is NodeKind.CLOUD]

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    def kind(self, node_id: int) -> NodeKind:
        return self._by_id[node_id].kind

    def colocated_cloud(self, ru: int) -> int:
        site = self._by_id[ru].site
        return next(n.id for n in self.nodes if n.kind is NodeKind.CLOUD and n.site == site)

    def out_links(self, node_id: int) -> list[Link]:
        return self._adjacency[node_id]

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate node ids")
        if sum(n.kind is NodeKind.CORE for n in self.nodes) != 1:
            raise TopologyError("topology must contain exactly one Core node")
        ru_sites = {n.site for n in self.nodes if n.kind is NodeKind.RU_SITE}
        cloud_sites = {n.site for n in self.nodes if n.kind is NodeKind.CLOUD}
        if not ru_sites <= cloud_sites:
            raise TopologyError("every RU site needs a co-located cloud")
        pairs = set()
        for i, link in enumerate(self.links):
            if link.index != i:
                raise TopologyError(f"link {i} has index {link.index}")
            if link.src not in self._by_id or link.dst not in self._by_id:
                raise TopologyError(f"link {i} references an unknown node")
            if link.src == link.dst:
                raise TopologyError(f"link {i} is a self-loop")
            if not (link.capacity_bps > 0) or not math.isfinite(link.capacity_bps):
                raise TopologyError(f"link {i} capacity must be positive, got {link.capacity_bps}")
            if not (link.latency_s >= 0) or not math.isfinite(link.latency_s):
                raise TopologyError(f"link {i} latency must be non-negative, got {link.latency_s}")
            pairs.add((link.src, link.dst))
        for src, dst in pairs:
            if (dst, src) not in pairs:
                raise TopologyError(f"link {src}->{dst} has no reverse link")
        if self.paths_k < 1:
            raise TopologyError("paths_k must be >= 1")

    # ------------------------------------------------------------------ #
    def required_pairs(self) -> list[tuple[int, int]]:
        """Endpoint pairs a function chain may route over."""
        core, clouds, rus = self.core, self.clouds, self.ru_sites
        out = [(core, c) for c in clouds]
        out += [(m, n) for m in clouds for n in clouds]
        out += [(c, r) for c in clouds for r in rus]
        return out

    def paths(self, src: int, dst: int) -> tuple[Path, ...]:
        key = (src, dst)
        cached = self._catalog.get(key)
        if cached is None:
            cached = tuple(k_shortest_paths(list(self.links), self._adjacency, src, dst, self.paths_k))
            self._catalog[key] = cached
        return cached

    def distances_from(self, src: int) -> dict[int, float]:
        """Shortest-path latency from ``src`` to every reachable node."""
        cached = self._distances.get(src)
        if cached is None:
            dist = {src: 0.0}
            heap = [(0.0, src)]
            while heap:
                d, v = heapq.heappop(heap)
                if d > dist.get(v, math.inf):
                    continue
                for link in self._adjacency[v]:
                    nd = d + link.latency_s
                    if nd < dist.get(link.dst, math.inf):
                        dist[link.dst] = nd
                        heapq.heappush(heap, (nd, link.dst))
            self._distances[src] = cached = dist
        return cached

    def shortest_latency(self, src: int, dst: int) -> float:
        return self.distances_from(src).get(dst, math.inf)

    @property
    def path_catalog(self) -> dict[tuple[int, int], tuple[Path, ...]]:
        """Entries computed so far (all required pairs after ``enumerate_paths``)."""
        return dict(self._catalog)

    def structurally_equal(self, other: "Topology") -> bool:
        return (
            isinstance(other, Topology)
            and self.nodes == other.nodes
            and self.links == other.links
            and self.paths_k == other.paths_k
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Topology) and self.structurally_equal(other)

    def __hash__(self) -> int:
        return hash((self.nodes, self.links, self.paths_k))

    def __repr__(self) -> str:
        return (
            f"Topology(ru_sites={len(self.ru_sites)}, clouds={len(self.clouds)}, "
            f"links={len(self.links)}, paths_k={self.paths_k})"
        )


def build_ring_topology(n_sites: int, params: TopologyParams | None = None) -> Topology:
    """Ring of ``n_sites`` RU sites, each with a co-located cloud, plus the core.

    For ``n_sites == 2`` the two ring spans are parallel links between the same
    pair of sites, which keeps the ``4n + 2`` directed link count.
    """
    params = params or TopologyParams()
    if not isinstance(n_sites, int) or n_sites < 2:
        raise TopologyError(f"n_sites must be an integer >= 2, got {n_sites!r}")
    if not 0 <= params.core_site < n_sites:
        raise TopologyError(f"core_site {params.core_site} outside ring of {n_sites}")
    nodes = [Node(i, NodeKind.RU_SITE, i) for i in range(n_sites)]
    nodes += [Node(n_sites + i, NodeKind.CLOUD, i) for i in range(n_sites)]
    core = 2 * n_sites
    nodes.append(Node(core, NodeKind.CORE, 0))

    links: list[Link] = []

    def pair(a: int, b: int, cap: float, lat: float) -> None:
        links.append(Link(len(links), a, b, float(cap), float(lat)))
        links.append(Link(len(links), b, a, float(cap), float(lat)))

    for i in range(n_sites):
        pair(i, (i + 1) % n_sites, params.link_capacity_bps, params.link_latency_s)
    for i in range(n_sites):
        pair(i, n_sites + i, params.site_link_capacity_bps, params.site_link_latency_s)
    pair(core, params.core_site, params.core_link_capacity_bps, params.core_link_latency_s)
    return Topology(nodes, links, params.paths_k)


def enumerate_paths(topology: Topology, k: int | None = None) -> Topology:
    """Return a topology whose catalog holds the ``k`` best paths of every required pair."""
    if k is not None and k != topology.paths_k:
        topology = Topology(topology.nodes, topology.links, k)
    for src, dst in topology.required_pairs():
        if not topology.paths(src, dst):
            raise TopologyError(f"required pair ({src}, {dst}) is disconnected")
    return topology


# ---------------------------------------------------------------------- #
# JSON document format

_KIND_BY_NAME = {k.value: k for k in NodeKind}


def topology_to_dict(topology: Topology) -> dict[str, Any]:
    return {
        "nodes": [{"id": n.id, "kind": n.kind.value} for n in topology.nodes],
        "links": [
            {"from": l.src, "to": l.dst, "capacity_bps": l.capacity_bps, "latency_s": l.latency_s}
            for l in topology.links
        ],
        "paths_k": topology.paths_k,
    }


def save_topology(topology: Topology) -> str:
    return json.dumps(topology_to_dict(topology), indent=2)


def _require(obj: Mapping, key: str, types: tuple, pointer: str):
    if key not in obj:
        raise TopologyParseError(f"{pointer}/{key}", "missing required field")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, types):
        raise TopologyParseError(f"{pointer}/{key}", f"expected {'/'.join(t.__name__ for t in types)}")
    return value


def topology_from_dict(doc: Any) -> Topology:
    if not isinstance(doc, Mapping):
        raise TopologyParseError("", "document must be an object")
    raw_nodes = _require(doc, "nodes", (list,), "")
    raw_links = _require(doc, "links", (list,), "")
    paths_k = doc.get("paths_k", 3)
    if isinstance(paths_k, bool) or not isinstance(paths_k, int):
        raise TopologyParseError("/paths_k", "expected int")

    parsed = []
    for i, raw in enumerate(raw_nodes):
        ptr = f"/nodes/{i}"
        if not isinstance(raw, Mapping):
            raise TopologyParseError(ptr, "expected object")
        node_id = _require(raw, "id", (int,), ptr)
        kind = _require(raw, "kind", (str,), ptr)
        if kind not in _KIND_BY_NAME:
            raise TopologyParseError(f"{ptr}/kind", f"unknown kind {kind!r}")
        if node_id < 0:
            raise TopologyParseError(f"{ptr}/id", "node id must be non-negative")
        parsed.append((node_id, _KIND_BY_NAME[kind]))
    # Site ordinals follow ascending id within each kind.
    nodes = []
    counters = {k: 0 for k in NodeKind}
    for node_id, kind in sorted(parsed):
        nodes.append(Node(node_id, kind, counters[kind]))
        counters[kind] += 1

    links = []
    for i, raw in enumerate(raw_links):
        ptr = f"/links/{i}"
        if not isinstance(raw, Mapping):
            raise TopologyParseError(ptr, "expected object")
        src = _require(raw, "from", (int,), ptr)
        dst = _require(raw, "to", (int,), ptr)
        cap = _require(raw, "capacity_bps", (int, float), ptr)
        lat = _require(raw, "latency_s", (int, float), ptr)
        links.append(Link(i, src, dst, float(cap), float(lat)))
    return Topology(nodes, links, paths_k)


def load_topology(document: str | bytes | Mapping) -> Topology:
    """Parse a topology JSON document (text or already-decoded mapping)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise TopologyParseError("", f"invalid JSON: {exc}") from exc
    return topology_from_dict(document)
