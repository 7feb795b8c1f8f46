import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from rideshare.transport import TransportInfeasible, min_cost_assignment


def test_diagonal():
    caps = {"d1": 1, "d2": 1}
    arcs = {"p1": {"d1": 1, "d2": 5}, "p2": {"d1": 5, "d2": 1}}
    got, cost = min_cost_assignment(caps, arcs)
    assert got == {"p1": "d1", "p2": "d2"}
    assert cost == 2


def test_orphan():
    with pytest.raises(TransportInfeasible) as e:
        min_cost_assignment({"d": 3}, {"p": {}, "q": {"d": 1.0}})
    assert e.value.unplaceable == ["p"]


def test_capacity_shortfall():
    with pytest.raises(TransportInfeasible):
        min_cost_assignment({"d": 1}, {"p": {"d": 1.0}, "q": {"d": 1.0}})


@st.composite
def instances(draw):
    nd = draw(st.integers(1, 4))
    npass = draw(st.integers(1, 7))
    caps = draw(st.lists(st.integers(0, 3), min_size=nd, max_size=nd))
    cost = draw(st.lists(st.one_of(st.none(), st.integers(0, 20)), min_size=nd * npass, max_size=nd * npass))
    return caps, np.array([np.nan if x is None else x for x in cost], dtype=float).reshape(npass, nd)


def lsa_oracle(caps, cost):
    slots = [d for d, c in enumerate(caps) for _ in range(c)]
    if len(slots) < cost.shape[0]:
        return None
    m = cost[:, slots]
    big = 1e6
    m = np.where(np.isnan(m), big, m)
    r, c = linear_sum_assignment(m)
    total = m[r, c].sum()
    return None if total >= big else total


@settings(max_examples=300)
@given(instances())
def test_matches_lsa(inst):
    caps, cost = inst
    capacity = {f"d{j}": c for j, c in enumerate(caps)}
    arcs = {f"p{i}": {f"d{j}": cost[i, j] for j in range(len(caps)) if not np.isnan(cost[i, j])}
            for i in range(cost.shape[0])}
    want = lsa_oracle(caps, cost)
    if want is None:
        with pytest.raises(TransportInfeasible):
            min_cost_assignment(capacity, arcs)
        return
    got, total = min_cost_assignment(capacity, arcs)
    assert total == pytest.approx(want)
    assert set(got) == set(arcs)
    for p, d in got.items():
        assert d in arcs[p]
    for d, c in capacity.items():
        assert sum(1 for x in got.values() if x == d) <= c
