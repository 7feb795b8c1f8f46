import pytest

from rideshare.geo import GeoPoint, offset_point
from rideshare.population import Commuter

ORIGIN = GeoPoint(40.40, -3.70)


def at(north_km=0.0, east_km=0.0, origin=ORIGIN):
    return offset_point(origin, north_km, east_km)


def person(cid, home=(0.0, 0.0), work=(10.0, 10.0), lh=540.0, lw=1020.0, cap=4, car=True):
    """Commuter with home/work given as (north, east) km offsets from ORIGIN."""
    return Commuter(cid, at(*home), at(*work), lh, lw, cap, car)


@pytest.fixture
def origin():
    return ORIGIN


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
