"""Min-cost assignment of unit-demand passengers to capacitated drivers.

Successive shortest paths on the bipartite flow network
source -> passenger (cap 1) -> driver (cap 1, cost) -> sink (cap = residual seats),
with Dijkstra on reduced costs. Unit demands make the optimum integral.
"""
from __future__ import annotations

import heapq
import math
from typing import Hashable, Mapping, Sequence


class TransportInfeasible(ValueError):
    def __init__(self, unplaceable):
        self.unplaceable = list(unplaceable)
        super().__init__(f"no feasible placement for passengers: {self.unplaceable}")


class _Network:
    __slots__ = ("to", "cap", "cost", "head", "nxt")

    def __init__(self, n):
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[float] = []
        self.head = [-1] * n
        self.nxt: list[int] = []

    def add(self, u, v, cap, cost):
        for a, b, c, w in ((u, v, cap, cost), (v, u, 0, -cost)):
            self.to.append(b)
            self.cap.append(c)
            self.cost.append(w)
            self.nxt.append(self.head[a])
            self.head[a] = len(self.to) - 1


def min_cost_assignment(
    capacity: Mapping[Hashable, int],
    arcs: Mapping[Hashable, Mapping[Hashable, float]],
    passengers: Sequence[Hashable] | None = None,
) -> tuple[dict, float]:
    """Assign every passenger to one driver, minimising total arc cost.

    ``capacity[d]`` is the number of free seats of driver ``d``; ``arcs[p][d]``
    the cost of seating passenger ``p`` with ``d`` (absent = infeasible).
    Returns ``(assignment, total_cost)``.
    """
    if passengers is None:
        passengers = list(arcs)
    if not passengers:
        return {}, 0.0
    orphan = [p for p in passengers if not any(capacity.get(d, 0) > 0 for d in arcs.get(p, ()))]
    if orphan:
        raise TransportInfeasible(orphan)

    drivers = sorted({d for p in passengers for d in arcs[p] if capacity.get(d, 0) > 0}, key=_key)
    d_index = {d: i for i, d in enumerate(drivers)}
    n_p, n_d = len(passengers), len(drivers)
    src, sink = n_p + n_d, n_p + n_d + 1
    net = _Network(n_p + n_d + 2)
    for i in range(n_p):
        net.add(src, i, 1, 0.0)
    arc_of = {}
    for i, p in enumerate(passengers):
        for d, w in sorted(arcs[p].items(), key=lambda kv: _key(kv[0])):
            j = d_index.get(d)
            if j is not None:
                net.add(i, n_p + j, 1, float(w))
                arc_of[len(net.to) - 2] = (i, j)
    for j, d in enumerate(drivers):
        net.add(n_p + j, sink, int(capacity[d]), 0.0)

    n = n_p + n_d + 2
    pot = [0.0] * n
    to, cap, cost, head, nxt = net.to, net.cap, net.cost, net.head, net.nxt
    for _ in range(n_p):
        dist = [math.inf] * n
        prev_edge = [-1] * n
        dist[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            du, u = heapq.heappop(heap)
            if du > dist[u]:
                continue
            e = head[u]
            pu = pot[u]
            while e != -1:
                if cap[e] > 0:
                    v = to[e]
                    nd = du + max(0.0, cost[e] + pu - pot[v])
                    if nd < dist[v] - 1e-12:
                        dist[v] = nd
                        prev_edge[v] = e
                        heapq.heappush(heap, (nd, v))
                e = nxt[e]
        if dist[sink] == math.inf:
            placed = _flows(net, arc_of)
            raise TransportInfeasible([passengers[i] for i in range(n_p) if i not in placed])
        reach = dist[sink]
        for v in range(n):
            pot[v] += dist[v] if dist[v] < reach else reach
        v = sink
        while v != src:
            e = prev_edge[v]
            cap[e] -= 1
            cap[e ^ 1] += 1
            v = to[e ^ 1]

    placed = _flows(net, arc_of)
    assignment = {passengers[i]: drivers[j] for i, j in placed.items()}
    total = sum(float(arcs[p][d]) for p, d in assignment.items())
    return assignment, total


def _flows(net: _Network, arc_of) -> dict[int, int]:
    return {i: j for e, (i, j) in arc_of.items() if net.cap[e] == 0}


def _key(x):
    return (type(x).__name__, x)
