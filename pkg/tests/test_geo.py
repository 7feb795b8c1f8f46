import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rideshare.geo import (EARTH_RADIUS_KM, GeoPoint, Grid, GridCell, OutOfBoundsError, distance_km,
                           haversine_km, offset_point)

lat = st.floats(-80, 80, allow_nan=False)
lon = st.floats(-179, 179, allow_nan=False)
points = st.builds(GeoPoint, lat, lon)


def law_of_cosines_km(a, b):
    # independent formula; fine away from the antipode and for non-tiny arcs
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    x = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(math.radians(b.lon - a.lon))
    return EARTH_RADIUS_KM * math.acos(max(-1.0, min(1.0, x)))


def test_identity_is_zero():
    p = GeoPoint(40.4168, -3.7038)
    assert distance_km(p, p) == 0.0


def test_one_degree_of_equator():
    assert distance_km(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(2 * math.pi * 6371 / 360, abs=0.01)
    assert distance_km(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(111.195, abs=0.01)


def test_madrid_barcelona():
    mad, bcn = GeoPoint(40.4168, -3.7038), GeoPoint(41.3874, 2.1686)
    d = distance_km(mad, bcn)
    assert d == pytest.approx(law_of_cosines_km(mad, bcn), abs=1e-6)
    assert d == pytest.approx(505, abs=1)


def test_bad_latitude():
    with pytest.raises(ValueError):
        GeoPoint(91, 0)


@given(points, points)
def test_symmetric_exact(a, b):
    assert distance_km(a, b) == distance_km(b, a)


@given(points, points, points)
def test_triangle(a, b, c):
    ab, bc, ac = distance_km(a, b), distance_km(b, c), distance_km(a, c)
    assert ac <= (ab + bc) * (1 + 1e-9) + 1e-9


@given(points, points)
def test_vectorised_matches_scalar(a, b):
    assert haversine_km(a.lat, a.lon, b.lat, b.lon) == pytest.approx(distance_km(a, b), rel=1e-12, abs=1e-9)


def test_to_cell_examples():
    o = GeoPoint(40.0, -3.0)
    g = Grid(o, 1.0)
    assert g.to_cell(o) == GridCell(0, 0)
    assert g.to_cell(offset_point(o, 0.3, 2.5)) == GridCell(0, 2)


def test_boundary_goes_up():
    o = GeoPoint(40.0, -3.0)
    g = Grid(o, 1.0)
    assert g.to_cell(offset_point(o, 1.0, 0.2)).row == 1
    # an exact column boundary at the row-center scale
    east_edge = g.cell_center(GridCell(0, 2))
    east_edge = GeoPoint(east_edge.lat, o.lon + 2.0 * (east_edge.lon - o.lon) / 2.5)
    assert g.to_cell(east_edge).col == 2


def test_out_of_bounds():
    o = GeoPoint(40.0, -3.0)
    with pytest.raises(OutOfBoundsError):
        Grid(o, 1.0).to_cell(offset_point(o, -0.5, 0.5))
    with pytest.raises(OutOfBoundsError):
        Grid(o, 1.0, rows=2, cols=2).to_cell(offset_point(o, 0.5, 2.5))


@settings(max_examples=200)
@given(st.floats(0, 30), st.floats(0, 30), st.sampled_from([0.25, 0.5, 1.0, 2.0]))
def test_center_within_half_diagonal(n, e, cell):
    o = GeoPoint(40.0, -3.7)
    g = Grid(o, cell)
    p = offset_point(o, n, e)
    cen = g.cell_center(g.to_cell(p))
    assert distance_km(p, cen) <= cell * math.sqrt(2) / 2 * (1 + 1e-3)


@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0, 20)), min_size=1, max_size=30))
def test_cells_of_matches_to_cell(offs):
    o = GeoPoint(40.0, -3.7)
    g = Grid(o, 0.5)
    pts = [offset_point(o, n, e) for n, e in offs]
    cells = g.cells_of([p.lat for p in pts], [p.lon for p in pts])
    assert [tuple(c) for c in cells.tolist()] == [tuple(g.to_cell(p)) for p in pts]


def test_covering_contains_all():
    rng = np.random.default_rng(0)
    lats = 40 + rng.random(200) * 0.3
    lons = -3.8 + rng.random(200) * 0.4
    g = Grid.covering(lats, lons, 0.5, margin_km=1.0)
    for a, b in zip(lats, lons):
        g.to_cell(GeoPoint(float(a), float(b)))
