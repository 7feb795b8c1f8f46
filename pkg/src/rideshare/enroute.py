"""En-route ride-sharing: cars routed over a road grid steal riders from smaller cars."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .endpoints import Assignment, MatchConstraints, schedule_compatible, socially_linked, success_ratio
from .geo import GeoPoint, Grid, GridCell
from .population import Commuter

DEFAULT_CELL_KM = 0.5


class RoutingError(ValueError):
    pass


@dataclass(frozen=True)
class RouteGrid:
    origin: GeoPoint
    cell_km: float
    rows: int
    cols: int
    blocked: frozenset = frozenset()

    @property
    def grid(self) -> Grid:
        return Grid(self.origin, self.cell_km, self.rows, self.cols)

    def to_cell(self, p: GeoPoint) -> GridCell:
        cell = self.grid.to_cell(p)
        if cell in self.blocked:
            raise RoutingError(f"{p} falls in blocked cell {tuple(cell)}")
        return cell

    @classmethod
    def covering(cls, population: Sequence[Commuter], cell_km: float = DEFAULT_CELL_KM,
                 margin_km: float = 2.0, blocked=frozenset()) -> "RouteGrid":
        lats = [x.home.lat for x in population] + [x.work.lat for x in population]
        lons = [x.home.lon for x in population] + [x.work.lon for x in population]
        g = Grid.covering(lats, lons, cell_km, margin_km)
        return cls(g.origin, cell_km, g.rows, g.cols, frozenset(GridCell(*b) for b in blocked))


@dataclass(frozen=True)
class Route:
    cells: tuple[GridCell, ...]
    length_km: float
    driver: Commuter | None = field(default=None, compare=False)

    def as_pairs(self) -> list[list[int]]:
        return [[c.row, c.col] for c in self.cells]


def compute_route(home: GeoPoint, work: GeoPoint, grid: RouteGrid, driver: Commuter | None = None) -> Route:
    """Shortest 4-neighbour path; among equal lengths the lexicographically smallest cell sequence."""
    src = grid.to_cell(home)
    dst = grid.to_cell(work)
    if grid.blocked:
        cells = _bfs_route(src, dst, grid)
    else:
        cells = _open_route(src, dst)
    return Route(tuple(cells), (len(cells) - 1) * grid.cell_km, driver)


def _open_route(src: GridCell, dst: GridCell) -> list[GridCell]:
    # Neighbours in lexicographic order are up, left, right, down; on an open grid
    # every step towards dst is shortest, so take the smallest useful one.
    r, c = src
    out = [GridCell(r, c)]
    while r > dst.row:
        r -= 1
        out.append(GridCell(r, c))
    while c > dst.col:
        c -= 1
        out.append(GridCell(r, c))
    while c < dst.col:
        c += 1
        out.append(GridCell(r, c))
    while r < dst.row:
        r += 1
        out.append(GridCell(r, c))
    return out


def _neighbors(cell: GridCell, grid: RouteGrid):
    r, c = cell
    for nr, nc in ((r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)):
        if 0 <= nr < grid.rows and 0 <= nc < grid.cols and (nr, nc) not in grid.blocked:
            yield GridCell(nr, nc)


def _bfs_route(src: GridCell, dst: GridCell, grid: RouteGrid) -> list[GridCell]:
    dist = {dst: 0}
    queue = deque([dst])
    while queue and src not in dist:
        cur = queue.popleft()
        for nb in _neighbors(cur, grid):
            if nb not in dist:
                dist[nb] = dist[cur] + 1
                queue.append(nb)
    if src not in dist:
        raise RoutingError(f"no path from {tuple(src)} to {tuple(dst)}")
    out = [src]
    cur = src
    while cur != dst:
        cur = next(nb for nb in _neighbors(cur, grid) if dist.get(nb) == dist[cur] - 1)
        out.append(cur)
    return out


def route_for(commuter: Commuter, grid: RouteGrid) -> Route:
    return compute_route(commuter.home, commuter.work, grid, driver=commuter)


def _cell_gap_km(cells: np.ndarray, north, east, cell_km: float) -> np.ndarray:
    """Planar distance from points (north, east) to each cell rectangle; shape (len(cells), n)."""
    lo_n = cells[:, 0:1] * cell_km
    lo_e = cells[:, 1:2] * cell_km
    dn = np.maximum(0.0, np.maximum(lo_n - north, north - (lo_n + cell_km)))
    de = np.maximum(0.0, np.maximum(lo_e - east, east - (lo_e + cell_km)))
    return np.hypot(dn, de)


def covers(route: Route, home: GeoPoint, work: GeoPoint, delta_km: float, grid: RouteGrid) -> bool:
    """Some route cell lies within delta of ``home`` and a later-or-equal one within delta of ``work``."""
    cells = np.array([[c.row, c.col] for c in route.cells], dtype=float)
    g = grid.grid
    hn, he = g.local_km([home.lat], [home.lon])
    wn, we = g.local_km([work.lat], [work.lon])
    near_h = np.nonzero(_cell_gap_km(cells, hn, he, grid.cell_km)[:, 0] <= delta_km)[0]
    if near_h.size == 0:
        return False
    near_w = np.nonzero(_cell_gap_km(cells, wn, we, grid.cell_km)[:, 0] <= delta_km)[0]
    return bool(near_w.size and near_w[-1] >= near_h[0])


def can_pick_up(driver_route: Route, passenger: Commuter, c: MatchConstraints, grid: RouteGrid,
                driver: Commuter | None = None) -> bool:
    driver = driver if driver is not None else driver_route.driver
    if driver is not None and driver.id != passenger.id and not schedule_compatible(driver, passenger, c):
        return False
    return covers(driver_route, passenger.home, passenger.work, c.delta_km, grid)


class _PickupIndex:
    """Lazily computed, per-driver list of everyone that driver could pick up."""

    def __init__(self, people: list[Commuter], c: MatchConstraints, grid: RouteGrid):
        self.people = people
        self.c = c
        self.grid = grid
        g = grid.grid
        lat = np.array([x.home.lat for x in people])
        lon = np.array([x.home.lon for x in people])
        self.hn, self.he = g.local_km(lat, lon)
        self.wn, self.we = g.local_km(np.array([x.work.lat for x in people]),
                                      np.array([x.work.lon for x in people]))
        self.lh = np.array([x.leave_home for x in people])
        self.lw = np.array([x.leave_work for x in people])
        self.home_cells = g.cells_of(lat, lon)
        self.by_cell: dict[tuple[int, int], list[int]] = {}
        for i, (r, col) in enumerate(self.home_cells.tolist()):
            self.by_cell.setdefault((r, col), []).append(i)
        self.reach = int(math.ceil(c.delta_km / grid.cell_km))
        self.routes: dict[int, Route] = {}
        self.lists: dict[int, np.ndarray] = {}

    def route(self, d: int) -> Route:
        r = self.routes.get(d)
        if r is None:
            r = self.routes[d] = route_for(self.people[d], self.grid)
        return r

    def pickups(self, d: int) -> np.ndarray:
        got = self.lists.get(d)
        if got is not None:
            return got
        route = self.route(d)
        k = self.reach
        cand_cells = set()
        for cell in route.cells:
            for dr in range(-k, k + 1):
                for dc in range(-k, k + 1):
                    cand_cells.add((cell.row + dr, cell.col + dc))
        cand = [i for cc in cand_cells for i in self.by_cell.get(cc, ())]
        cand = np.array(sorted(cand), dtype=np.int64)
        c = self.c
        if cand.size and c.tau != math.inf:
            ok = (np.abs(self.lh[cand] - self.lh[d]) <= c.tau) & (np.abs(self.lw[cand] - self.lw[d]) <= c.tau)
            cand = cand[ok]
        if cand.size:
            cells = np.array([[x.row, x.col] for x in route.cells], dtype=float)
            gap_h = _cell_gap_km(cells, self.hn[cand], self.he[cand], self.grid.cell_km) <= c.delta_km
            gap_w = _cell_gap_km(cells, self.wn[cand], self.we[cand], self.grid.cell_km) <= c.delta_km
            L = len(cells)
            has_h = gap_h.any(axis=0)
            first_h = np.where(has_h, gap_h.argmax(axis=0), L)
            last_w = np.where(gap_w.any(axis=0), L - 1 - gap_w[::-1].argmax(axis=0), -1)
            cand = cand[has_h & (last_w >= first_h)]
        if cand.size and c.social_hops is not None:
            me = self.people[d].id
            ok = [socially_linked(me, self.people[i].id, c) for i in cand.tolist()]
            cand = cand[np.array(ok, dtype=bool)]
        cand = cand[cand != d]
        self.lists[d] = cand
        return cand


def enroute_solve(a0: Assignment, population: Sequence[Commuter], c: MatchConstraints, grid: RouteGrid,
                  strict_richer: bool = False, stats: dict | None = None) -> Assignment:
    """Rich-get-richer sweeps until a sweep changes nothing.

    Non-full cars are routed in decreasing occupancy (ties by driver id). A
    routed car takes any rider of a later, not-yet-routed car whose trip its
    route covers, provided it is at least as full as that car (strictly fuller
    with ``strict_richer``). A solo car's driver can be taken too, which
    removes the car.
    """
    people = sorted(population, key=lambda x: x.id)
    index = {x.id: i for i, x in enumerate(people)}
    cap = [x.capacity for x in people]
    driver_of = [index[a0.assigned[x.id]] for x in people]
    members: dict[int, set[int]] = {}
    for v, d in enumerate(driver_of):
        members.setdefault(d, set()).add(v)
    pick = _PickupIndex(people, c, grid)

    sweeps = 0
    limit = max(1, len(members)) * 4 + 1
    while True:
        sweeps += 1
        changed = False
        order = sorted((d for d, m in members.items() if len(m) < cap[d]), key=lambda d: (-len(members[d]), d))
        pos = {d: k for k, d in enumerate(order)}
        for k, v in enumerate(order):
            if v not in members or len(members[v]) >= cap[v]:
                continue
            cands = []
            for p in pick.pickups(v).tolist():
                dp = driver_of[p]
                kp = pos.get(dp)
                if kp is None or kp <= k or dp not in members:
                    continue
                cands.append((kp, p == dp, p))
            cands.sort()
            for kp, is_driver, p in cands:
                if len(members[v]) >= cap[v]:
                    break
                dp = driver_of[p]
                if dp not in members or pos.get(dp) != kp:
                    continue
                mine, theirs = len(members[v]), len(members[dp])
                if mine < theirs or (strict_richer and mine == theirs):
                    continue
                if is_driver and theirs > 1:
                    continue
                members[dp].discard(p)
                members[v].add(p)
                driver_of[p] = v
                if not members[dp]:
                    del members[dp]
                changed = True
        if not changed or sweeps >= limit:
            break
    if stats is not None:
        stats["sweeps"] = sweeps
        stats["converged"] = not changed
    ids = [x.id for x in people]
    return Assignment({ids[d] for d in members}, {ids[v]: ids[d] for v, d in enumerate(driver_of)})


def savings_report(cars_before: int, a_end: Assignment) -> float:
    return success_ratio(cars_before, a_end.car_count)


def enroute_pair_check(population: Sequence[Commuter], c: MatchConstraints, grid: RouteGrid):
    """Pair predicate for ``validate_assignment`` accepting en-route pickups."""
    cache: dict[str, Route] = {}

    def ok(driver: Commuter, passenger: Commuter) -> bool:
        r = cache.get(driver.id)
        if r is None:
            r = cache[driver.id] = route_for(driver, grid)
        return can_pick_up(r, passenger, c, grid)

    return ok
