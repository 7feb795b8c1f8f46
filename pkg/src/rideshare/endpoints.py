"""End-points ride-sharing as capacitated facility location.

Drivers are opened facilities, passengers are unit demands, and the cost of a
solution is the penalty of every open car plus the pickup (virtual) distance of
every passenger. The penalty of a car exceeds any pickup cost it can save, so
minimising cost first minimises the number of cars.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geo import KM_PER_DEG, distance_km, haversine_km
from .population import DEFAULT_CAPACITY, Commuter
from .social import SocialGraph, within_k_hops
from .transport import TransportInfeasible, min_cost_assignment

EPSILON_KM = 0.001
BRUTE_FORCE_LIMIT = 12


@dataclass(frozen=True)
class MatchConstraints:
    delta_km: float = 1.0
    tau_min: float | None = None  # None: no departure-time constraint
    social_hops: int | None = None
    social_graph: SocialGraph | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.delta_km < 0:
            raise ValueError("delta_km must be non-negative")
        if self.tau_min is not None and self.tau_min < 0:
            raise ValueError("tau_min must be non-negative")
        if self.social_hops not in (None, 1, 2):
            raise ValueError("social_hops must be None, 1 or 2")
        if self.social_hops is not None and self.social_graph is None:
            raise ValueError("a social graph is required when social_hops is set")

    @property
    def tau(self) -> float:
        return math.inf if self.tau_min is None else float(self.tau_min)

    def penalty(self, capacity: int) -> float:
        return 2.0 * self.delta_km * capacity + EPSILON_KM

    def to_dict(self) -> dict:
        return {"delta_km": self.delta_km, "tau_min": self.tau_min, "social_hops": self.social_hops}


@dataclass
class Assignment:
    drivers: set[str]
    assigned: dict[str, str]

    @property
    def car_count(self) -> int:
        return len(self.drivers)

    def cars(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {d: [] for d in sorted(self.drivers)}
        for v, d in self.assigned.items():
            out.setdefault(d, []).append(v)
        for members in out.values():
            members.sort()
        return out

    def occupancy(self, driver: str) -> int:
        return sum(1 for d in self.assigned.values() if d == driver)

    def to_json(self, constraints: MatchConstraints | None = None, cost: "CostBreakdown | None" = None,
                routes: dict | None = None) -> dict:
        out = {
            "drivers": sorted(self.drivers),
            "assigned": {k: self.assigned[k] for k in sorted(self.assigned)},
        }
        if constraints is not None:
            out["constraints"] = constraints.to_dict()
        if cost is not None:
            out["cost"] = cost.to_dict()
        if routes is not None:
            out["routes"] = routes
        return out

    @classmethod
    def from_json(cls, d: dict) -> "Assignment":
        return cls(set(d["drivers"]), dict(d["assigned"]))


@dataclass(frozen=True)
class CostBreakdown:
    penalty_cost: float
    distance_cost: float
    car_count: int

    @property
    def total(self) -> float:
        return self.penalty_cost + self.distance_cost

    def to_dict(self) -> dict:
        return {"penalty_cost": self.penalty_cost, "distance_cost": self.distance_cost,
                "car_count": self.car_count, "total": self.total}


def socially_linked(u: str, v: str, c: MatchConstraints) -> bool:
    if c.social_hops is None or u == v:
        return True
    return within_k_hops(c.social_graph, u, v, c.social_hops)


def schedule_compatible(u: Commuter, v: Commuter, c: MatchConstraints) -> bool:
    """Departure-time and social checks shared by end-points and en-route matching."""
    tau = c.tau
    return (abs(u.leave_home - v.leave_home) <= tau
            and abs(u.leave_work - v.leave_work) <= tau
            and socially_linked(u.id, v.id, c))


def virtual_distance(u: Commuter, v: Commuter, c: MatchConstraints) -> float:
    """h + w when the pair may share a car, ``math.inf`` otherwise."""
    if u.id == v.id:
        return 0.0
    h = distance_km(u.home, v.home)
    w = distance_km(u.work, v.work)
    if max(h, w) > c.delta_km or not schedule_compatible(u, v, c):
        return math.inf
    return h + w


class OptionGraph:
    """Symmetric feasibility graph over a population, in CSR form.

    Commuters are re-indexed by ascending id, so index order is id order and
    ties broken by index are ties broken by id.
    """

    def __init__(self, commuters: Sequence[Commuter], c: MatchConstraints):
        self.constraints = c
        self.commuters = sorted(commuters, key=lambda x: x.id)
        self.ids = [x.id for x in self.commuters]
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("commuter ids must be unique")
        self.index = {cid: i for i, cid in enumerate(self.ids)}
        n = len(self.commuters)
        self.n = n
        self.capacity = np.array([x.capacity for x in self.commuters], dtype=np.int64)
        self.hlat = np.array([x.home.lat for x in self.commuters], dtype=float)
        self.hlon = np.array([x.home.lon for x in self.commuters], dtype=float)
        self.wlat = np.array([x.work.lat for x in self.commuters], dtype=float)
        self.wlon = np.array([x.work.lon for x in self.commuters], dtype=float)
        self.lh = np.array([x.leave_home for x in self.commuters], dtype=float)
        self.lw = np.array([x.leave_work for x in self.commuters], dtype=float)
        i, j, d = self._feasible_pairs()
        ii = np.concatenate([i, j])
        jj = np.concatenate([j, i])
        dd = np.concatenate([d, d])
        order = np.lexsort((jj, ii))
        self.indices = jj[order]
        self.dist = dd[order]
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(ii, minlength=n), out=self.indptr[1:])

    # -- construction -------------------------------------------------------

    def _feasible_pairs(self, chunk: int = 4_000_000):
        """All i < j pairs with d(i, j) finite, via a 4-d (home, work) grid.

        Cells are slightly larger than delta in both latitude and longitude
        (longitude width taken at the highest latitude present), so any
        feasible pair sits in the same or an adjacent cell on every axis.
        """
        n = self.n
        empty = (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, float))
        if n < 2:
            return empty
        c = self.constraints
        delta = c.delta_km
        cell = max(delta, 0.01) * 1.01
        lat_all = np.concatenate([self.hlat, self.wlat])
        lon_all = np.concatenate([self.hlon, self.wlon])
        cos_min = math.cos(math.radians(min(89.9, float(np.abs(lat_all).max()))))
        dlat = cell / KM_PER_DEG
        dlon = cell / (KM_PER_DEG * cos_min)
        lat0, lon0 = float(lat_all.min()), float(lon_all.min())

        def idx(a, origin, step):
            return np.floor((a - origin) / step).astype(np.int64) + 1

        axes = [idx(self.hlat, lat0, dlat), idx(self.hlon, lon0, dlon),
                idx(self.wlat, lat0, dlat), idx(self.wlon, lon0, dlon)]
        dims = [int(a.max()) + 2 for a in axes]
        strides = [dims[1] * dims[2] * dims[3], dims[2] * dims[3], dims[3], 1]
        key = sum(a * s for a, s in zip(axes, strides))
        order = np.argsort(key, kind="stable")
        skey = key[order]
        ukeys, starts, counts = np.unique(skey, return_index=True, return_counts=True)

        offsets = []
        for off in itertools.product((-1, 0, 1), repeat=4):
            code = sum(o * s for o, s in zip(off, strides))
            if code >= 0:
                offsets.append(code)

        out_i, out_j, out_d = [], [], []
        for code in offsets:
            pos = np.searchsorted(ukeys, ukeys + code)
            pos_c = np.minimum(pos, len(ukeys) - 1)
            hit = (pos < len(ukeys)) & (ukeys[pos_c] == ukeys + code)
            a_cells = np.nonzero(hit)[0]
            b_cells = pos[hit]
            if a_cells.size == 0:
                continue
            na = counts[a_cells]
            nb = counts[b_cells]
            sizes = na * nb
            bounds = np.cumsum(sizes)
            # process in chunks of cell pairs to bound memory
            lo = 0
            while lo < len(a_cells):
                base = bounds[lo - 1] if lo else 0
                hi = int(np.searchsorted(bounds, base + chunk, side="right"))
                hi = max(hi, lo + 1)
                sl = slice(lo, hi)
                ca, cb = a_cells[sl], b_cells[sl]
                sz = sizes[sl]
                total = int(sz.sum())
                pid = np.repeat(np.arange(len(ca)), sz)
                first = np.cumsum(sz) - sz
                local = np.arange(total) - first[pid]
                nbp = counts[cb][pid]
                ia = order[starts[ca][pid] + local // nbp]
                ib = order[starts[cb][pid] + local % nbp]
                if code == 0:
                    keep = ia < ib
                    ia, ib = ia[keep], ib[keep]
                self._check(ia, ib, out_i, out_j, out_d)
                lo = hi
        if not out_i:
            return empty
        return np.concatenate(out_i), np.concatenate(out_j), np.concatenate(out_d)

    def _check(self, ia, ib, out_i, out_j, out_d):
        c = self.constraints
        if ia.size == 0:
            return
        tau = c.tau
        if tau != math.inf:
            ok = (np.abs(self.lh[ia] - self.lh[ib]) <= tau) & (np.abs(self.lw[ia] - self.lw[ib]) <= tau)
            ia, ib = ia[ok], ib[ok]
        h = haversine_km(self.hlat[ia], self.hlon[ia], self.hlat[ib], self.hlon[ib])
        ok = h <= c.delta_km
        ia, ib, h = ia[ok], ib[ok], h[ok]
        w = haversine_km(self.wlat[ia], self.wlon[ia], self.wlat[ib], self.wlon[ib])
        ok = w <= c.delta_km
        ia, ib, h, w = ia[ok], ib[ok], h[ok], w[ok]
        if c.social_hops is not None and ia.size:
            ids = self.ids
            ok = np.fromiter((within_k_hops(c.social_graph, ids[a], ids[b], c.social_hops)
                              for a, b in zip(ia.tolist(), ib.tolist())), dtype=bool, count=ia.size)
            ia, ib, h, w = ia[ok], ib[ok], h[ok], w[ok]
        a = np.minimum(ia, ib)
        b = np.maximum(ia, ib)
        out_i.append(a)
        out_j.append(b)
        out_d.append(h + w)

    # -- queries --------------------------------------------------------------

    def row(self, i: int):
        s, e = self.indptr[i], self.indptr[i + 1]
        return self.indices[s:e], self.dist[s:e]

    def n_options(self) -> np.ndarray:
        return np.diff(self.indptr)

    def d(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        nbrs, dist = self.row(i)
        k = np.searchsorted(nbrs, j)
        if k < len(nbrs) and nbrs[k] == j:
            return float(dist[k])
        return math.inf

    def feasible(self, i: int, j: int) -> bool:
        return self.d(i, j) < math.inf

    def penalty(self, i: int) -> float:
        return self.constraints.penalty(int(self.capacity[i]))

    def to_assignment(self, driver_of: np.ndarray) -> Assignment:
        ids = self.ids
        assigned = {ids[v]: ids[int(d)] for v, d in enumerate(driver_of)}
        return Assignment({ids[int(d)] for d in np.unique(driver_of)}, assigned)

    def driver_array(self, a: Assignment) -> np.ndarray:
        return np.array([self.index[a.assigned[cid]] for cid in self.ids], dtype=np.int64)


def options(v: Commuter, population: Sequence[Commuter], c: MatchConstraints,
            graph: OptionGraph | None = None) -> set[str]:
    g = graph if graph is not None else OptionGraph(population, c)
    nbrs, _ = g.row(g.index[v.id])
    return {g.ids[j] for j in nbrs}


def global_ordering(population: Sequence[Commuter], c: MatchConstraints,
                    graph: OptionGraph | None = None) -> list[str]:
    """Commuters by ascending number of options, ties by ascending id."""
    g = graph if graph is not None else OptionGraph(population, c)
    return [g.ids[i] for i in _ordering(g)]


def _ordering(g: OptionGraph) -> np.ndarray:
    return np.lexsort((np.arange(g.n), g.n_options()))


def b_matching_init(population: Sequence[Commuter], c: MatchConstraints,
                    graph: OptionGraph | None = None) -> Assignment:
    g = graph if graph is not None else OptionGraph(population, c)
    return g.to_assignment(_b_matching(g))


def _b_matching(g: OptionGraph) -> np.ndarray:
    """Greedy group formation in scarcity order.

    Each unmatched commuter (the hub) claims its nearest unmatched options up
    to its free seats. The group member that can seat everyone, with the
    fewest empty seats, drives; remaining ties go to lower pickup distance,
    then lower id.
    """
    n = g.n
    driver_of = np.full(n, -1, dtype=np.int64)
    for v in _ordering(g).tolist():
        if driver_of[v] >= 0:
            continue
        nbrs, dist = g.row(v)
        free = driver_of[nbrs] < 0
        cand, cd = nbrs[free], dist[free]
        take = np.lexsort((cand, cd))[: int(g.capacity[v]) - 1]
        group = [v] + cand[take].tolist()
        best, best_key = v, None
        for m in group:
            if g.capacity[m] < len(group):
                continue
            pickup = 0.0
            for o in group:
                if o != m:
                    pickup += g.d(m, o)
            if pickup == math.inf:
                continue
            key = (int(g.capacity[m]) - len(group), pickup, m)
            if best_key is None or key < best_key:
                best, best_key = m, key
        driver_of[group] = best
    return driver_of


def solve_transportation(open_drivers: Sequence[tuple[Commuter, int]], passengers: Sequence[Commuter],
                         c: MatchConstraints) -> tuple[dict[str, str], float]:
    """Exact min-distance placement of passengers into drivers' free seats.

    ``open_drivers`` pairs each driver with its residual seat count. Raises
    ``TransportInfeasible`` naming the passengers that cannot be seated.
    """
    capacity = {d.id: int(r) for d, r in open_drivers}
    arcs = {}
    for p in passengers:
        row = {}
        for d, _ in open_drivers:
            x = virtual_distance(d, p, c)
            if x < math.inf:
                row[d.id] = x
        arcs[p.id] = row
    return min_cost_assignment(capacity, arcs, [p.id for p in passengers])


def total_cost(a: Assignment, population: Sequence[Commuter], c: MatchConstraints) -> CostBreakdown:
    by_id = {x.id: x for x in population}
    penalty = sum(c.penalty(by_id[d].capacity) for d in a.drivers)
    dist = 0.0
    for v, d in a.assigned.items():
        if v != d:
            dist += virtual_distance(by_id[d], by_id[v], c)
    return CostBreakdown(penalty, dist, len(a.drivers))


def _cost_of(g: OptionGraph, driver_of: np.ndarray) -> float:
    total = sum(g.penalty(int(d)) for d in np.unique(driver_of))
    for v, d in enumerate(driver_of.tolist()):
        if v != d:
            total += g.d(d, v)
    return total


def success_ratio(cars_before: int, cars_after: int) -> float:
    if cars_before <= 0:
        raise ValueError("success ratio undefined for zero initial cars")
    if cars_after < 0:
        raise ValueError("cars_after must be non-negative")
    return 100.0 * (cars_before - cars_after) / cars_before


def absolute_upper_bound(capacity: int = DEFAULT_CAPACITY) -> float:
    return 100.0 * (1 - 1 / capacity)


def tighter_upper_bound(population: Sequence[Commuter], c: MatchConstraints,
                        graph: OptionGraph | None = None) -> float:
    """Success if everyone with at least one option rode in a full car of four."""
    n = len(population)
    if n == 0:
        return 0.0
    g = graph if graph is not None else OptionGraph(population, c)
    m = int((g.n_options() > 0).sum())
    cars = math.ceil(m / DEFAULT_CAPACITY) + (n - m)
    return success_ratio(n, cars)


# -- local search -------------------------------------------------------------


def local_search_improve(a0: Assignment, population: Sequence[Commuter], c: MatchConstraints,
                         neighborhood_size: int = 32, max_iters: int = 50, seed: int = 0,
                         graph: OptionGraph | None = None, exact_limit: int = 200) -> Assignment:
    """Improve ``a0`` by driver closures and swaps, re-seating passengers optimally.

    Full cars are frozen each iteration. Every candidate driver set is scored
    with an exact transportation solve; when the unfrozen population exceeds
    ``exact_limit`` the solve is restricted to the cars around the changed
    drivers, with all other cars held fixed.
    """
    g = graph if graph is not None else OptionGraph(population, c)
    driver_of = g.driver_array(a0)
    if max_iters <= 0 or neighborhood_size <= 0:
        return a0
    rng = np.random.default_rng(seed)
    for _ in range(max_iters):
        step = _improve_once(g, driver_of, rng, neighborhood_size, exact_limit)
        if step is None:
            break
        driver_of = step
    return g.to_assignment(driver_of)


def _cars(driver_of: np.ndarray) -> dict[int, list[int]]:
    cars: dict[int, list[int]] = {}
    for v, d in enumerate(driver_of.tolist()):
        cars.setdefault(d, []).append(v)
    return cars


def _improve_once(g: OptionGraph, driver_of: np.ndarray, rng, neighborhood_size: int, exact_limit: int):
    cars = _cars(driver_of)
    open_drivers = sorted(d for d, m in cars.items() if len(m) < g.capacity[d])
    if not open_drivers:
        return None
    unfrozen = [v for d in open_drivers for v in cars[d]]
    is_open = np.zeros(g.n, dtype=bool)
    is_open[open_drivers] = True
    unfrozen_mask = np.zeros(g.n, dtype=bool)
    unfrozen_mask[unfrozen] = True
    exact = len(unfrozen) <= exact_limit

    candidates = []
    seen = set()
    for _ in range(neighborhood_size):
        d = open_drivers[int(rng.integers(len(open_drivers)))]
        move = None
        if rng.random() < 0.5:
            nbrs, _ = g.row(d)
            pool = [u for u in nbrs.tolist() if unfrozen_mask[u] and not is_open[u]]
            if pool:
                move = ("swap", d, pool[int(rng.integers(len(pool)))])
        if move is None:
            move = ("close", d, None)
        if move not in seen:
            seen.add(move)
            candidates.append(move)

    best_delta, best_update = -1e-9, None
    for kind, d, u in candidates:
        region = unfrozen if exact else _region(g, cars, is_open, d, u, driver_of)
        old_drivers = {driver_of[m] for m in region}
        new_drivers = set(old_drivers)
        new_drivers.discard(d)
        if kind == "swap":
            new_drivers.add(u)
        if not new_drivers and region:
            continue
        old_cost = sum(g.penalty(x) for x in old_drivers)
        old_cost += sum(g.d(int(driver_of[m]), m) for m in region if driver_of[m] != m)
        cap = {x: int(g.capacity[x]) - 1 for x in new_drivers}
        arcs = {}
        for p in region:
            if p in new_drivers:
                continue
            nbrs, dist = g.row(p)
            arcs[p] = {x: w for x, w in zip(nbrs.tolist(), dist.tolist()) if x in new_drivers}
        try:
            placed, dist_cost = min_cost_assignment(cap, arcs)
        except TransportInfeasible:
            continue
        delta = sum(g.penalty(x) for x in new_drivers) + dist_cost - old_cost
        if delta < best_delta:
            best_delta = delta
            best_update = (new_drivers, placed)
    if best_update is None:
        return None
    new_drivers, placed = best_update
    out = driver_of.copy()
    for x in new_drivers:
        out[x] = x
    for p, x in placed.items():
        out[p] = x
    return out


def _region(g: OptionGraph, cars, is_open, d: int, u: int | None, driver_of) -> list[int]:
    """Members of the changed cars and of every open car a member could move to."""
    core = set(cars[d])
    if u is not None:
        core.update(cars[int(driver_of[u])])
    touched = {int(driver_of[m]) for m in core}
    for m in list(core):
        nbrs, _ = g.row(m)
        for x in nbrs.tolist():
            if is_open[x]:
                touched.add(x)
    return [m for x in sorted(touched) for m in cars[x]]


def solve_endpoints(population: Sequence[Commuter], c: MatchConstraints, neighborhood_size: int = 32,
                    max_iters: int = 50, seed: int = 0, graph: OptionGraph | None = None) -> Assignment:
    g = graph if graph is not None else OptionGraph(population, c)
    a0 = b_matching_init(population, c, graph=g)
    return local_search_improve(a0, population, c, neighborhood_size, max_iters, seed, graph=g)


# -- exhaustive oracle ----------------------------------------------------------


def brute_force_optimal(population: Sequence[Commuter], c: MatchConstraints) -> Assignment:
    """Minimum P(S) + D(S) by enumerating every driver set (at most 12 commuters).

    Each driver set is scored with a dense assignment over expanded seats, so
    this path shares no code with the heuristic solver.
    """
    from scipy.optimize import linear_sum_assignment

    n = len(population)
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force refused for {n} > {BRUTE_FORCE_LIMIT} commuters")
    if n == 0:
        return Assignment(set(), {})
    people = sorted(population, key=lambda x: x.id)
    d = np.array([[virtual_distance(a, b, c) for b in people] for a in people])
    pen = np.array([c.penalty(x.capacity) for x in people])
    big = 1e9
    best_cost, best = math.inf, None
    for k in range(1, n + 1):
        if np.sort(pen)[:k].sum() >= best_cost:
            break
        for S in itertools.combinations(range(n), k):
            riders = [v for v in range(n) if v not in S]
            p_cost = pen[list(S)].sum()
            if p_cost >= best_cost:
                continue
            if not riders:
                cost, pick = p_cost, {}
            else:
                slots = [s for s in S for _ in range(people[s].capacity - 1)]
                if len(slots) < len(riders):
                    continue
                m = d[np.ix_(slots, riders)].T
                if not np.isfinite(m).any(axis=1).all():
                    continue
                m = np.where(np.isfinite(m), m, big)
                r, col = linear_sum_assignment(m)
                if m[r, col].max() >= big:
                    continue
                cost = p_cost + m[r, col].sum()
                pick = {riders[i]: slots[j] for i, j in zip(r, col)}
            if cost < best_cost - 1e-12:
                best_cost = cost
                best = (S, pick)
    S, pick = best
    assigned = {people[s].id: people[s].id for s in S}
    assigned.update({people[v].id: people[s].id for v, s in pick.items()})
    return Assignment({people[s].id for s in S}, assigned)


# -- validation -----------------------------------------------------------------


def validate_assignment(a: Assignment, population: Sequence[Commuter], c: MatchConstraints,
                        pair_ok=None) -> list[str]:
    """Return every invariant violation of ``a`` (empty list when valid).

    ``pair_ok(driver, passenger)`` may widen pair feasibility beyond the
    end-points rule (en-route pickups); end-points feasibility is always accepted.
    """
    errors = []
    by_id = {x.id: x for x in population}
    if set(a.assigned) != set(by_id):
        missing = sorted(set(by_id) - set(a.assigned))
        extra = sorted(set(a.assigned) - set(by_id))
        if missing:
            errors.append(f"unassigned commuters: {missing[:10]}")
        if extra:
            errors.append(f"unknown commuters in assignment: {extra[:10]}")
    occ: dict[str, int] = {}
    for v, d in a.assigned.items():
        occ[d] = occ.get(d, 0) + 1
        if d not in a.drivers:
            errors.append(f"{v} assigned to non-driver {d}")
    for d in a.drivers:
        if a.assigned.get(d) != d:
            errors.append(f"driver {d} does not drive itself")
        if d in by_id and occ.get(d, 0) > by_id[d].capacity:
            errors.append(f"driver {d} carries {occ[d]} > capacity {by_id[d].capacity}")
        if occ.get(d, 0) == 0:
            errors.append(f"driver {d} has an empty car")
    for v, d in a.assigned.items():
        if v == d or v not in by_id or d not in by_id:
            continue
        if virtual_distance(by_id[d], by_id[v], c) < math.inf:
            continue
        if pair_ok is not None and pair_ok(by_id[d], by_id[v]):
            continue
        errors.append(f"infeasible pair driver={d} passenger={v}")
    return errors
