import random
import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rideshare.cdr import (EPOCH_BASE, CdrEvent, PlaceCluster, ScoreWeights, TrainingError, classify_home_work,
                           cluster_events, eligibility, eligible, estimate_departure, group_by_user,
                           infer_user, is_home_hour, is_work_hour, label_clusters, load_cdr, save_cdr,
                           synthetic_cdr, train_weights, training_accuracy, trip_time_minutes)
from rideshare.geo import GeoPoint, Grid, distance_km, offset_point
from rideshare.population import generate_city, preset

O = GeoPoint(40.40, -3.70)
HOME = O
WORK = offset_point(O, 6.0, 4.0)


def ev(day, hh, mm, tower, user="u"):
    return CdrEvent(user, EPOCH_BASE + day * 86400 + hh * 3600 + mm * 60, tower)


def cl(home_ev, work_ev, days=10, weeks=4, rank=1, where=O):
    return PlaceCluster(where, frozenset({where}), days, weeks, rank, home_ev, work_ev, home_ev + work_ev)


def test_hour_windows():
    assert is_home_hour(19 * 60) and is_home_hour(0) and is_home_hour(6 * 60 + 59)
    assert not is_home_hour(7 * 60)
    assert is_work_hour(13 * 60) and not is_work_hour(17 * 60)


def test_one_tower_one_cluster():
    cs = cluster_events([ev(d, 20, 0, HOME) for d in range(5)])
    assert len(cs) == 1 and cs[0].centroid == HOME


def test_far_towers_split():
    far = offset_point(O, 10, 0)
    assert len(cluster_events([ev(0, 20, 0, O), ev(1, 14, 0, far)])) == 2


def test_single_linkage_chain():
    towers = [offset_point(O, 0, k) for k in (0.0, 0.8, 1.6)]
    assert distance_km(towers[0], towers[2]) > 1.0
    cs = cluster_events([ev(i, 20, 0, t) for i, t in enumerate(towers)])
    assert len(cs) == 1 and len(cs[0].towers) == 3


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 23), st.floats(0, 5), st.floats(0, 5)),
                min_size=1, max_size=30), st.randoms())
def test_clustering_order_free(raw, rnd):
    evs = [ev(d, h, 0, offset_point(O, n, e)) for d, h, n, e in raw]
    shuffled = list(evs)
    rnd.shuffle(shuffled)
    assert cluster_events(evs) == cluster_events(shuffled)


def test_counts_additive():
    rng = random.Random(3)
    evs = [ev(rng.randrange(40), rng.randrange(24), 0, rng.choice([HOME, WORK])) for _ in range(80)]
    full = {c.towers: c for c in cluster_events(evs)}
    half1 = {c.towers: c for c in cluster_events(evs[:40])}
    half2 = {c.towers: c for c in cluster_events(evs[40:])}
    for key in full:
        assert full[key].home_hour_events == half1[key].home_hour_events + half2[key].home_hour_events
        assert full[key].work_hour_events == half1[key].work_hour_events + half2[key].work_hour_events


def test_eligibility_rules():
    assert not eligible([])
    assert eligibility([ev(0, 20, 0, HOME), ev(50, 20, 0, HOME)])[1] == "insufficient-activity"
    one_place = [ev(d, 20, 0, HOME) for d in range(60)]
    assert eligibility(one_place) == (False, "insufficient-clusters")
    # 90 calls over 60 days, two places seen on many days over many weeks
    two = [ev(d, 20, 0, HOME) for d in range(60)] + [ev(d, 14, 0, WORK) for d in range(0, 60, 2)]
    assert len(two) == 90
    assert eligible(two)


def test_classify_default_weights():
    a = cl(50, 0, rank=1, where=HOME)
    b = cl(0, 50, rank=2, where=WORK)
    got = classify_home_work([a, b])
    assert got.home == HOME and got.work == WORK
    # direct scorer arithmetic for the home row of a: bias, days, weeks, 1/rank, home, work shares
    x = np.array([1, 0.5, 0.5, 1.0, 1.0, 0.0])
    assert x @ np.array(ScoreWeights().home) > 0


def test_classify_single_and_identical():
    assert classify_home_work([cl(10, 10)]) is None
    assert classify_home_work([cl(10, 10, rank=1), cl(10, 10, rank=1, where=WORK)]) is None


def separable_users(k, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(k):
        h = offset_point(O, float(rng.uniform(0, 20)), 0)
        w = offset_point(h, 8.0, 3.0)
        hn, wn = int(rng.integers(20, 40)), int(rng.integers(10, 30))
        clusters = [cl(hn, 1, 20, 5, 1, h), cl(1, wn, 15, 5, 2, w),
                    cl(1, 1, 2, 0, 3, offset_point(h, -10, -10))]
        out.append((clusters, h, w))
    return out


def test_train_separable():
    data = separable_users(40)
    m = train_weights(data)
    assert training_accuracy(data, m) == 1.0
    m2 = train_weights(data)
    assert np.allclose(m.home, m2.home, atol=1e-9) and np.allclose(m.work, m2.work, atol=1e-9)


def test_train_needs_twenty():
    with pytest.raises(TrainingError):
        train_weights(separable_users(19))


def test_labels_nearest_within_two_km():
    h, w = label_clusters([cl(1, 1, where=HOME), cl(1, 1, where=WORK)], offset_point(HOME, 1.5, 0), O)
    assert h.tolist() == [1, 0] and w.tolist() == [1, 0]


def place(where):
    return PlaceCluster(where, frozenset({where}), 5, 3, 1, 0, 0)


def test_departure_median():
    h, w = place(HOME), place(WORK)
    evs = [ev(0, 8, 50, HOME), ev(0, 9, 20, WORK), ev(1, 9, 0, HOME), ev(1, 9, 30, WORK),
           ev(2, 9, 10, HOME), ev(2, 9, 40, WORK)]
    lh, lw = estimate_departure(evs, h, w, trip_time_min=20)
    assert lh == 540.0 and lw is None


def test_departure_needs_three():
    evs = [ev(0, 8, 50, HOME), ev(0, 9, 20, WORK), ev(1, 9, 0, HOME), ev(1, 9, 30, WORK)]
    assert estimate_departure(evs, place(HOME), place(WORK), 20) == (None, None)


def test_departure_pair_too_slow():
    trip = 20
    base = [ev(d, 9, 0, HOME) for d in range(3)]
    ok = [ev(d, 9, 2 * trip - 1, WORK) for d in range(3)]
    late = [ev(d, 9, 2 * trip + 1, WORK) for d in range(3)]
    assert estimate_departure(base + ok, place(HOME), place(WORK), trip)[0] == 540.0
    assert estimate_departure(base + late, place(HOME), place(WORK), trip)[0] is None


def test_trip_time_floor():
    assert trip_time_minutes(HOME, offset_point(HOME, 1, 0)) == 15
    assert trip_time_minutes(HOME, offset_point(HOME, 25, 0)) == pytest.approx(60, rel=1e-6)


def test_file_roundtrip(tmp_path):
    tower = GeoPoint(round(WORK.lat, 7), round(WORK.lon, 7))  # files keep 7 decimals
    evs = [ev(0, 9, 0, HOME, "a"), ev(1, 14, 30, tower, "b")]
    save_cdr(evs, tmp_path / "c.csv")
    assert load_cdr(tmp_path / "c.csv") == evs


def test_synthetic_recovery():
    people = generate_city(preset("clustered-metro", 300, seed=11))
    events, truth = synthetic_cdr(people, seed=4)
    users = group_by_user(events)
    lats = [e.tower.lat for e in events]
    lons = [e.tower.lon for e in events]
    grid = Grid.covering(lats + [t.home.lat for t in truth.values()] + [t.work.lat for t in truth.values()],
                         lons + [t.home.lon for t in truth.values()] + [t.work.lon for t in truth.values()],
                         1.0, margin_km=1.0)
    hits = n = 0
    errs = []
    for uid, evs in users.items():
        r = infer_user(uid, evs)
        if not r.eligible:
            continue
        n += 1
        t = truth[uid]
        if r.result is not None:
            near = all(max(abs(a - b) for a, b in zip(grid.to_cell(x), grid.to_cell(y))) <= 1
                       for x, y in ((r.result.home, t.home), (r.result.work, t.work)))
            hits += near
        if r.leave_home is not None:
            errs.append(abs(r.leave_home - t.leave_home))
        if r.leave_work is not None:
            errs.append(abs(r.leave_work - t.leave_work))
    assert n > 200
    assert hits / n >= 0.9
    assert statistics.median(errs) <= 10
