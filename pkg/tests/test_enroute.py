from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from rideshare.endpoints import Assignment, MatchConstraints, solve_endpoints, validate_assignment
from rideshare.enroute import (RouteGrid, RoutingError, can_pick_up, compute_route, enroute_pair_check,
                               enroute_solve, route_for, savings_report)
from rideshare.geo import GeoPoint, GridCell
from rideshare.population import Commuter, generate_city, preset

O = GeoPoint(40.0, -3.7)
C1 = MatchConstraints(delta_km=1.0)


def rg(rows=20, cols=20, blocked=(), cell=0.5):
    return RouteGrid(O, cell, rows, cols, frozenset(GridCell(*b) for b in blocked))


def pt(grid, r, c):
    return grid.grid.cell_center(GridCell(r, c))


def rider(cid, grid, h, w, lh=540.0, lw=1020.0):
    return Commuter(cid, pt(grid, *h), pt(grid, *w), lh, lw)


def bfs_len(grid, src, dst):
    seen = {src: 0}
    q = deque([src])
    while q:
        r, c = q.popleft()
        if (r, c) == dst:
            return seen[(r, c)]
        for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if 0 <= nr < grid.rows and 0 <= nc < grid.cols and (nr, nc) not in grid.blocked \
                    and (nr, nc) not in seen:
                seen[(nr, nc)] = seen[(r, c)] + 1
                q.append((nr, nc))
    return None


def well_formed(route, grid):
    cells = route.cells
    for a, b in zip(cells, cells[1:]):
        assert abs(a.row - b.row) + abs(a.col - b.col) == 1
    assert not set(cells) & grid.blocked


def test_same_cell():
    g = rg()
    r = compute_route(pt(g, 3, 3), pt(g, 3, 3), g)
    assert r.cells == (GridCell(3, 3),) and r.length_km == 0


def test_straight_row():
    g = rg()
    r = compute_route(pt(g, 0, 0), pt(g, 0, 3), g)
    assert r.cells == tuple(GridCell(0, c) for c in range(4))
    assert r.length_km == pytest.approx(1.5)


def test_wall_detour():
    wall = [(r, 5) for r in range(0, 9)]
    g = rg(10, 10, wall)
    r = compute_route(pt(g, 0, 0), pt(g, 0, 9), g)
    well_formed(r, g)
    assert len(r.cells) - 1 == bfs_len(g, (0, 0), (0, 9)) == 27


def test_no_path():
    g = rg(5, 5, [(r, 2) for r in range(5)])
    with pytest.raises(RoutingError):
        compute_route(pt(g, 0, 0), pt(g, 0, 4), g)


@settings(max_examples=120, deadline=None)
@given(st.sets(st.tuples(st.integers(0, 7), st.integers(0, 7)), max_size=20),
       st.tuples(st.integers(0, 7), st.integers(0, 7)), st.tuples(st.integers(0, 7), st.integers(0, 7)))
def test_bfs_oracle(blocked, src, dst):
    blocked = blocked - {src, dst}
    g = rg(8, 8, blocked)
    want = bfs_len(g, src, dst)
    if want is None:
        with pytest.raises(RoutingError):
            compute_route(pt(g, *src), pt(g, *dst), g)
        return
    r = compute_route(pt(g, *src), pt(g, *dst), g)
    well_formed(r, g)
    assert r.cells[0] == src and r.cells[-1] == dst
    assert len(r.cells) - 1 == want


@settings(max_examples=80, deadline=None)
@given(st.tuples(st.integers(0, 7), st.integers(0, 7)), st.tuples(st.integers(0, 7), st.integers(0, 7)))
def test_open_grid_agrees_with_bfs_path(src, dst):
    # the closed form and the search path must pick the same lexicographically smallest route
    open_g = rg(8, 8)
    # a blocked cell far away forces the search code path without changing any route
    far = rg(9, 9, [(8, 8)])
    a = compute_route(pt(open_g, *src), pt(open_g, *dst), open_g)
    b = compute_route(pt(far, *src), pt(far, *dst), far)
    assert a.cells == b.cells


def test_pickup_on_route():
    g = rg()
    d = rider("d", g, (0, 0), (0, 10))
    p = rider("p", g, (0, 2), (0, 7))
    assert can_pick_up(route_for(d, g), p, MatchConstraints(0.0, 10), g)


def test_pickup_reversed():
    g = rg()
    d = rider("d", g, (0, 0), (0, 10))
    p = rider("p", g, (0, 10), (0, 0))
    assert not can_pick_up(route_for(d, g), p, MatchConstraints(0.4, 10), g)


def test_pickup_far():
    g = rg()
    d = rider("d", g, (0, 0), (0, 10))
    p = rider("p", g, (8, 2), (8, 7))  # 4 km from the route, delta 1 km
    assert not can_pick_up(route_for(d, g), p, C1, g)


def test_pickup_time():
    g = rg()
    d = rider("d", g, (0, 0), (0, 10))
    p = rider("p", g, (0, 2), (0, 7), lh=560)
    assert not can_pick_up(route_for(d, g), p, MatchConstraints(1.0, 10), g)


def test_full_cars_unchanged():
    g = rg()
    pop = [rider(f"a{i}", g, (0, 0), (0, 10)) for i in range(4)]
    a0 = Assignment({"a0"}, {p.id: "a0" for p in pop})
    a = enroute_solve(a0, pop, C1, g)
    assert a.drivers == a0.drivers and a.assigned == a0.assigned


def test_two_solos_merge():
    g = rg()
    pop = [rider("a", g, (0, 0), (0, 10)), rider("b", g, (0, 0), (0, 10))]
    a0 = Assignment({"a", "b"}, {"a": "a", "b": "b"})
    a = enroute_solve(a0, pop, C1, g)
    assert a.car_count == 1
    assert savings_report(2, a) == 50.0
    strict = enroute_solve(a0, pop, C1, g, strict_richer=True)
    assert strict.car_count == 2


def test_big_car_absorbs_solo():
    g = rg()
    big = [rider(f"a{i}", g, (0, 0), (0, 12)) for i in range(3)]
    solo = rider("b", g, (0, 4), (0, 9))  # too far from a's home/work for end-points, but on a's route
    pop = big + [solo]
    assert validate_assignment(Assignment({"a0"}, {p.id: "a0" for p in pop}), pop, C1)
    a0 = Assignment({"a0", "b"}, {"a0": "a0", "a1": "a0", "a2": "a0", "b": "b"})
    stats = {}
    a = enroute_solve(a0, pop, C1, g, stats=stats)
    assert a.car_count == 1 and a.assigned["b"] == "a0"
    assert validate_assignment(a, pop, C1, pair_ok=enroute_pair_check(pop, C1, g)) == []
    assert stats["converged"]


def test_no_merge_keeps_savings():
    g = rg()
    pop = [rider("a", g, (0, 0), (0, 3)), rider("b", g, (15, 0), (15, 3))]
    a0 = Assignment({"a", "b"}, {"a": "a", "b": "b"})
    assert savings_report(2, enroute_solve(a0, pop, C1, g)) == savings_report(2, a0) == 0


@pytest.mark.parametrize("seed", range(4))
def test_invariants_on_city(seed):
    people = generate_city(preset("clustered-metro", 600, seed=seed))
    c = MatchConstraints(1.0, 10)
    grid = RouteGrid.covering(people, 0.5, margin_km=2.0)
    a0 = solve_endpoints(people, c, seed=seed)
    stats = {}
    a = enroute_solve(a0, people, c, grid, stats=stats)
    assert a.car_count <= a0.car_count
    assert set(a.assigned) == set(a0.assigned)
    assert all(1 <= a.occupancy(d) <= 4 for d in a.drivers)
    assert stats["sweeps"] <= 4 * a0.car_count
    assert validate_assignment(a, people, c, pair_ok=enroute_pair_check(people, c, grid)) == []
