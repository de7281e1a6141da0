"""Best-first branch-and-bound over per-RU recovery options.

RUs are decided in order of decreasing demand (lower id first on ties). At
each node the next undecided RU either takes one of its recovered options or
stays unrecovered. Options are ranked by a DU slot matching over the RUs
still undecided: those that keep to the matching come first.
Children are generated one at a time: a node re-enters the queue with the
bound of its parent until its options are exhausted, so the search dives
towards a complete plan before it widens.

The bound is LP-free and takes the minimum of two relaxations, neither of
which looks at bandwidth beyond per-RU fit:

* a fractional knapsack of the recoverable RUs' compute into the total
  residual compute;
* a matching of DUs onto the slots of the clouds each RU can reach within
  its fronthaul budget, which caps how many RUs can still get a DU.

An RU counts as recoverable only while at least one of its options fits the
current residuals on its own.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from functools import reduce
from typing import Optional

from .model import RecoveryModel
from .plan import RecoveryPlan, SolveStats

__all__ = ["SolveLimits", "solve", "BOUNDS"]

BOUNDS = ("knapsack", "trivial")
_EPS = 1e-9


@dataclass(frozen=True)
class SolveLimits:
    time_s: Optional[float] = 300.0
    node_cap: Optional[int] = None
    dive_rounds: int = 30  # incumbent dives per ranking before the search starts


def _b_matching(adjacency: list[tuple[int, ...]], slots: list[int]) -> list[Optional[int]]:
    """Maximum matching of items to bins with integer capacities (augmenting paths).

    Items are matched in list order and try bins in adjacency order, so the
    result is deterministic.
    """
    assigned: list[Optional[int]] = [None] * len(adjacency)
    holders: dict[int, list[int]] = {}

    def augment(item: int, seen: set) -> bool:
        for b in adjacency[item]:
            if b in seen or slots[b] <= 0:
                continue
            seen.add(b)
            held = holders.setdefault(b, [])
            if len(held) < slots[b]:
                held.append(item)
                assigned[item] = b
                return True
            for other in list(held):
                if augment(other, seen):
                    held.remove(other)
                    held.append(item)
                    assigned[item] = b
                    return True
        return False

    for item in range(len(adjacency)):
        augment(item, set())
    return assigned


class _Search:
    def __init__(self, model: RecoveryModel, bound: str):
        if bound not in BOUNDS:
            raise ValueError(f"unknown bound {bound!r}; expected one of {BOUNDS}")
        self.bound_kind = bound
        self.order = sorted(model.rus, key=lambda c: (-c.demand_bps, c.ru))
        self.clouds = sorted(model.residual_compute)
        cloud_pos = {c: i for i, c in enumerate(self.clouds)}
        links = sorted({l for c in self.order for o in c.recovered + c.unrecovered for l, _ in o.bandwidth})
        link_pos = {l: i for i, l in enumerate(links)}
        self.root_rc = [model.residual_compute[c] for c in self.clouds]
        self.root_rb = [model.residual_bw[l] for l in links]

        # Options in index form: (compute ((pos, load), ...), bandwidth ((pos, traffic), ...)).
        self.opts = []
        self.du_sets = []
        self.req = []
        for cand in self.order:
            rec = [
                (tuple((cloud_pos[c], q) for c, q in o.compute), tuple((link_pos[l], t) for l, t in o.bandwidth))
                for o in cand.recovered
            ]
            unrec = [((), tuple((link_pos[l], t) for l, t in o.bandwidth)) for o in cand.unrecovered]
            self.opts.append((rec, unrec))
            # DU clouds in order of their best option's latency.
            self.du_sets.append(tuple(dict.fromkeys(cloud_pos[o.du] for o in cand.recovered)) if cand.needs_du else None)
            weight = (cand.cu_load if cand.needs_cu else 0.0) + (cand.du_load if cand.needs_du else 0.0)
            self.req.append((weight, cand.du_load if cand.needs_du else 0.0, cand.demand_bps))
        self.max_traffic = max((t for rec, _ in self.opts for _, bw in rec for _, t in bw), default=0)
        du_loads = [r[1] for r in self.req if r[1] > 0]
        self.du_slot = min(du_loads) if du_loads else 0.0
        demands = [c.demand_bps for c in self.order if c.demand_bps > 0]
        self.gcd = reduce(math.gcd, demands) if demands else 1
        self.suffix = [0] * (len(self.order) + 1)
        for d in range(len(self.order) - 1, -1, -1):
            self.suffix[d] = self.suffix[d + 1] + self.order[d].demand_bps

    @staticmethod
    def fits(rc, rb, opt) -> bool:
        compute, bandwidth = opt
        for c, q in compute:
            if rc[c] < q - _EPS:
                return False
        for l, t in bandwidth:
            if rb[l] < t:
                return False
        return True

    @staticmethod
    def apply(rc, rb, opt):
        compute, bandwidth = opt
        rc2 = list(rc) if compute else rc
        for c, q in compute:
            rc2[c] -= q
        rb2 = list(rb) if bandwidth else rb
        for l, t in bandwidth:
            rb2[l] -= t
        return rc2, rb2

    def first_fits(self, depth: int, rc, rb, start) -> tuple[int, ...]:
        """Per remaining RU, index of its first recovered option that still fits.

        Residuals only shrink along a branch, so scanning resumes where the
        parent stopped.
        """
        out = list(start)
        for j in range(depth, len(self.order)):
            rec = self.opts[j][0]
            i = out[j]
            while i < len(rec) and not self.fits(rc, rb, rec[i]):
                i += 1
            out[j] = i
        return tuple(out)

    def bound(self, depth: int, value: int, rc, ff) -> int:
        if self.bound_kind == "trivial":
            return value + self.suffix[depth]
        items = []
        free = []
        du_need = []
        for j in range(depth, len(self.order)):
            weight, du_load, demand = self.req[j]
            if demand <= 0 or ff[j] >= len(self.opts[j][0]):
                continue
            items.append((weight, demand))
            if du_load > 0:
                du_need.append(j)
            else:
                free.append(demand)

        # Fractional knapsack on total compute.
        capacity = sum(v for v in rc if v > 0)
        extra = 0
        items.sort(key=lambda it: (0, -it[1]) if it[0] <= 0 else (1, -it[1] / it[0]))
        for weight, demand in items:
            if weight <= 0:
                extra += demand
            elif weight <= capacity + _EPS:
                extra += demand
                capacity -= weight
            else:
                extra += int(math.floor(demand * capacity / weight))
                break
        best = extra

        # DU placement: at most as many RUs as a matching onto DU slots can serve.
        if du_need:
            assigned = self.du_matching(du_need, rc)
            placeable = sum(1 for c in assigned if c is not None)
            if placeable < len(du_need):
                top = sorted((self.req[j][2] for j in du_need), reverse=True)[:placeable]
                best = min(best, sum(free) + sum(top))
        total = value + best
        return total - total % self.gcd if self.gcd > 1 else total

    def slots(self, rc) -> list[int]:
        return [int(math.floor(v / self.du_slot + _EPS)) if v > 0 else 0 for v in rc]

    def du_matching(self, rus: list[int], rc) -> list[Optional[int]]:
        adjacency = [tuple(c for c in self.du_sets[j] if rc[c] >= self.req[j][1] - _EPS) for j in rus]
        return _b_matching(adjacency, self.slots(rc))

    def scored(self, j: int, rc, rb, start: int, upcoming) -> list[tuple]:
        """Features of the fitting recovered options of RU ``j``.

        A DU slot matching over ``j`` and the ``upcoming`` RUs suggests a DU
        cloud for ``j`` and reserves compute for the other matched DUs. Each
        entry is ``(miss, tight, room, traffic, index)``: departures from the
        suggestion or from the reserved compute, links left too full for one
        more segment, leftover compute on the clouds used, new traffic, and
        the option index (options are pre-sorted by latency).
        """
        rec = self.opts[j][0]
        cand = self.order[j]
        suggested = None
        leftover = list(rc)
        if self.du_slot > 0:
            rus = [k for k in [j, *upcoming] if self.req[k][1] > 0]
            for k, c in zip(rus, self.du_matching(rus, rc)):
                if k == j:
                    suggested = c
                elif c is not None:
                    leftover[c] -= self.req[k][1]
        out = []
        for i in range(start, len(rec)):
            if not self.fits(rc, rb, rec[i]):
                continue
            compute, bandwidth = rec[i]
            miss = 1 if cand.needs_du and suggested is not None and cand.recovered[i].du != suggested else 0
            room = 0.0
            for c, q in compute:
                spare = leftover[c] - q
                if spare < -_EPS:
                    miss += 1
                room += spare
            tight = 0
            traffic = 0
            for l, t in bandwidth:
                traffic += t
                if rb[l] - t < self.max_traffic:
                    tight += 1
            out.append((miss, tight, room, traffic, i))
        return out

    def ranked(self, j: int, rc, rb, start: int) -> tuple[int, ...]:
        """Fitting recovered options of RU ``j`` in branching order, then the unrecovered ones."""
        keyed = sorted(_RANKINGS[0](f) for f in self.scored(j, rc, rb, start, range(j + 1, len(self.order))))
        n_rec = len(self.opts[j][0])
        return tuple(k[-1] for k in keyed) + tuple(n_rec + u for u in range(len(self.opts[j][1])))

    def option(self, j: int, i: int):
        rec, unrec = self.opts[j]
        return rec[i] if i < len(rec) else unrec[i - len(rec)]


# Orderings of option features used by the incumbent dives; the first one is
# also the branching order of the search.
_RANKINGS = (
    lambda f: (f[0], f[1], -f[2], f[4]),
    lambda f: (f[1], f[0], -f[2], f[4]),
    lambda f: (f[0], f[1], f[3], -f[2], f[4]),
    lambda f: (f[0], f[3], f[1], -f[2], f[4]),
)


def _dive(search: _Search, order: list[int], ranking) -> tuple[int, Optional[list], list[int]]:
    """Deciding RUs in ``order``, take the best-ranked fitting option of each.

    Returns the value, the per-RU choices in search order (None if forced
    routes cannot be kept) and the RUs left unrecovered.
    """
    rc, rb = search.root_rc, search.root_rb
    value = 0
    choices: list[Optional[int]] = [None] * len(search.order)
    missed = []
    for pos, j in enumerate(order):
        scored = search.scored(j, rc, rb, 0, order[pos + 1:])
        if scored:
            i = min(scored, key=ranking)[-1]
            value += search.order[j].demand_bps
        else:
            missed.append(j)
            rec, unrec = search.opts[j]
            i = next((len(rec) + u for u, opt in enumerate(unrec) if search.fits(rc, rb, opt)), None)
            if i is None:
                return -1, None, missed
        rc, rb = search.apply(rc, rb, search.option(j, i))
        choices[j] = i
    return value, choices, missed


def _incumbent(search: _Search, rounds: int, target: int) -> tuple[int, Optional[tuple]]:
    """Best plan over repeated dives, stopping early once ``target`` is reached.

    Each ranking starts from the search order; after every dive the RUs it
    left unrecovered move to the front, so the next dive serves them first.
    """
    best_value, best = -1, None
    for ranking in _RANKINGS:
        order = list(range(len(search.order)))
        for _ in range(max(1, rounds)):
            value, choices, missed = _dive(search, order, ranking)
            if choices is not None and value > best_value:
                best_value, best = value, tuple(choices)
            if best_value >= target or not missed:
                break
            order = missed + [j for j in order if j not in set(missed)]
        if best_value >= target:
            break
    return best_value, best


def solve(model: RecoveryModel, limits: SolveLimits | None = None, bound: str = "knapsack") -> RecoveryPlan:
    """Exact recovery plan by best-first branch-and-bound.

    ``bound="trivial"`` swaps the relaxations for the sum of remaining
    demands; it changes only how fast optimality is proven. When a limit is
    hit, the best plan found so far is returned with ``proven_optimal=False``.
    Node limits keep results reproducible; time limits do not.
    """
    limits = limits or SolveLimits()
    start = time.perf_counter()
    search = _Search(model, bound)
    n = len(search.order)

    ff0 = search.first_fits(0, search.root_rc, search.root_rb, [0] * n)
    root_bound = search.bound(0, 0, search.root_rc, ff0)
    incumbent_value, incumbent = _incumbent(search, limits.dive_rounds, root_bound)
    if incumbent is None:
        raise RuntimeError("no feasible plan: surviving functions cannot keep their forced routes")

    counter = 0
    # Entry: (-bound, discrepancy, -depth, seq, depth, value, rc, rb, choices, ranked options, position, first fits).
    # Equal bounds are broken by the summed rank of the options taken so far,
    # so the search revisits early choices before late ones.
    heap = [(-root_bound, 0, 0, counter, 0, 0, search.root_rc, search.root_rb, (), None, 0, ff0)]
    nodes = 0
    proven = True
    while heap:
        if limits.node_cap is not None and nodes >= limits.node_cap:
            proven = False
            break
        if limits.time_s is not None and nodes % 32 == 0 and time.perf_counter() - start > limits.time_s:
            proven = False
            break
        neg_bound, disc, _, _, depth, value, rc, rb, choices, ranked, pos, ff = heapq.heappop(heap)
        if -neg_bound <= incumbent_value:
            continue
        nodes += 1
        if depth == n:
            if value > incumbent_value:
                incumbent_value, incumbent = value, choices
            continue
        if ranked is None:
            ranked = search.ranked(depth, rc, rb, ff[depth])
        n_rec = len(search.opts[depth][0])
        while pos < len(ranked) and not search.fits(rc, rb, search.option(depth, ranked[pos])):
            pos += 1
            disc += 1
        if pos >= len(ranked):
            continue
        i = ranked[pos]
        rc2, rb2 = search.apply(rc, rb, search.option(depth, i))
        ff2 = search.first_fits(depth + 1, rc2, rb2, ff)
        value2 = value + (search.order[depth].demand_bps if i < n_rec else 0)
        b2 = search.bound(depth + 1, value2, rc2, ff2)
        if b2 > incumbent_value:
            counter += 1
            heapq.heappush(
                heap, (-b2, disc, -(depth + 1), counter, depth + 1, value2, rc2, rb2, choices + (i,), None, 0, ff2)
            )
        if pos + 1 < len(ranked):
            # Later recovered siblings share the parent's bound; once only
            # unrecovered variants remain the RU's demand is lost.
            sib_bound = -neg_bound
            if ranked[pos + 1] >= n_rec:
                sib_bound = min(sib_bound, search.bound(depth + 1, value, rc, ff))
            if sib_bound > incumbent_value:
                counter += 1
                heapq.heappush(
                    heap, (-sib_bound, disc + 1, -depth, counter, depth, value, rc, rb, choices, ranked, pos + 1, ff)
                )

    if proven:
        best_bound = incumbent_value
    else:
        best_bound = max([incumbent_value] + [-e[0] for e in heap])
    wall = time.perf_counter() - start

    decisions = []
    for j, idx in enumerate(incumbent):
        cand = search.order[j]
        opt = cand.recovered[idx] if idx < len(cand.recovered) else cand.unrecovered[idx - len(cand.recovered)]
        decisions.append(opt.decision(cand.ru))
    decisions.sort(key=lambda d: d.ru)
    stats = SolveStats(
        nodes_explored=nodes,
        best_bound=best_bound,
        wall_time_s=wall,
        proven_optimal=proven,
    )
    return RecoveryPlan(tuple(decisions), incumbent_value, stats)
