"""Acquaintance graphs for k-hop ride-sharing filters."""
from __future__ import annotations

import csv
from collections import defaultdict
from typing import Hashable, Iterable

import numpy as np

DEGREE_CAP = 1000


class SocialGraph:
    """Undirected simple graph stored as adjacency sets. Treat as immutable once built."""

    def __init__(self, edges: Iterable[tuple[Hashable, Hashable]] = (), nodes: Iterable[Hashable] = ()):
        self.adj: dict[Hashable, set] = defaultdict(set)
        for n in nodes:
            self.adj[n]
        for u, v in edges:
            if u == v:
                continue
            self.adj[u].add(v)
            self.adj[v].add(u)
        self.adj = dict(self.adj)

    @property
    def nodes(self):
        return self.adj.keys()

    def __contains__(self, u) -> bool:
        return u in self.adj

    def __len__(self) -> int:
        return len(self.adj)

    def degree(self, u) -> int:
        return len(self.adj.get(u, ()))

    def neighbors(self, u) -> set:
        return self.adj.get(u, set())

    def edges(self):
        seen = set()
        for u, nbrs in self.adj.items():
            seen.add(u)
            for v in nbrs:
                if v not in seen:
                    yield u, v

    def n_edges(self) -> int:
        return sum(len(s) for s in self.adj.values()) // 2

    def max_degree(self) -> int:
        return max((len(s) for s in self.adj.values()), default=0)

    def remove_hubs(self, degree_cap: int = DEGREE_CAP) -> "SocialGraph":
        hubs = {u for u, s in self.adj.items() if len(s) > degree_cap}
        g = SocialGraph()
        g.adj = {u: s - hubs for u, s in self.adj.items() if u not in hubs}
        return g


def build_from_calls(calls: Iterable[tuple[Hashable, Hashable]], degree_cap: int = DEGREE_CAP) -> SocialGraph:
    """One edge per pair that called at least once (either direction).

    Nodes with more than ``degree_cap`` neighbours are dropped afterwards, in a
    single pass.
    """
    edges = []
    for caller, callee in calls:
        if caller == callee:
            raise ValueError(f"self-call record for {caller!r}")
        edges.append((caller, callee))
    return SocialGraph(edges).remove_hubs(degree_cap)


def within_k_hops(g: SocialGraph, u, v, k: int) -> bool:
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    if u not in g.adj or v not in g.adj:
        return False
    if u == v:
        return True
    nu = g.adj[u]
    if v in nu:
        return True
    if k == 1:
        return False
    nv = g.adj[v]
    small, large = (nu, nv) if len(nu) <= len(nv) else (nv, nu)
    return any(w in large for w in small)


def friendship_paradox_cdf(g: SocialGraph) -> list[float]:
    """Mean neighbour degree over own degree, for every node with degree >= 1, sorted ascending."""
    if len(g) == 0:
        raise ValueError("graph is empty")
    ratios = []
    for u, nbrs in g.adj.items():
        d = len(nbrs)
        if d == 0:
            continue
        mean_nbr = sum(len(g.adj[w]) for w in nbrs) / d
        ratios.append(mean_nbr / d)
    ratios.sort()
    return ratios


def preferential_attachment(node_ids, mean_degree: float = 6.0, seed: int = 0) -> SocialGraph:
    """Barabasi-Albert graph over ``node_ids`` with roughly the given mean degree."""
    import networkx as nx

    node_ids = list(node_ids)
    m = max(1, int(round(mean_degree / 2)))
    if len(node_ids) <= m:
        return SocialGraph(nodes=node_ids)
    ba = nx.barabasi_albert_graph(len(node_ids), m, seed=seed)
    # shuffle labels so hubs are not the lowest ids
    perm = np.random.default_rng(seed).permutation(len(node_ids))
    label = [node_ids[i] for i in perm]
    return SocialGraph(((label[a], label[b]) for a, b in ba.edges()), nodes=node_ids)


def load_edges(path) -> SocialGraph:
    edges = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return SocialGraph()
        if [h.strip() for h in header] != ["user_a", "user_b"]:
            raise ValueError(f"{path}: line 1: expected header user_a,user_b")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 2 fields")
            a, b = row[0].strip(), row[1].strip()
            if a == b:
                raise ValueError(f"{path}: line {lineno}: self-loop on {a!r}")
            edges.add((a, b) if a < b else (b, a))
    return SocialGraph(sorted(edges))


def save_edges(g: SocialGraph, path) -> None:
    pairs = sorted({(min(u, v), max(u, v)) for u in g.adj for v in g.adj[u]})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_a", "user_b"])
        w.writerows(pairs)
