import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rideshare.endpoints import MatchConstraints
from rideshare.extrapolation import FitError, fit_and_project, fit_savings_curve, sample_curve
from rideshare.pipeline import solve
from rideshare.population import generate_city, preset

FR = [0.1, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0]


def synth(a, b, c, fr=FR):
    return [(f, a - b * f ** (-c)) for f in fr]


def test_exact_recovery():
    curve = fit_savings_curve(synth(70, 30, 0.5))
    assert curve.a == pytest.approx(70, rel=1e-6)
    assert curve.b == pytest.approx(30, rel=1e-6)
    assert curve.c == pytest.approx(0.5, rel=1e-6)
    assert fit_and_project(synth(70, 30, 0.5), 3.6) == pytest.approx(70 - 30 * 3.6 ** -0.5, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(20, 70), st.floats(0.5, 1.0), st.floats(0.2, 2.0))
def test_recovery_property(a, frac_b, c):
    b = frac_b * a * 0.1 ** c  # keeps s(0.1) >= 0
    curve = fit_savings_curve(synth(a, b, c))
    np.testing.assert_allclose([curve.a, curve.b, curve.c], [a, b, c], rtol=1e-6)


def test_two_points_rejected():
    with pytest.raises(FitError):
        fit_savings_curve([(0.5, 10), (1.0, 12)])
    with pytest.raises(FitError):
        fit_savings_curve([(0.5, 10), (0.5, 11), (1.0, 12)])


def test_constant_points():
    assert fit_and_project([(0.3, 40), (0.6, 40), (1.0, 40)], 3.6) == pytest.approx(40, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 74), min_size=3, max_size=6))
def test_clamp(ys):
    fr = np.linspace(0.2, 1.0, len(ys))
    pts = list(zip(fr, sorted(ys)))
    try:
        curve = fit_savings_curve(pts)
    except FitError:
        return
    p = curve.project(3.6)
    assert max(ys) - 1e-12 <= p <= 75
    if curve.b > 0 and curve.c > 0:
        n = np.linspace(0.05, 5, 200)
        s = curve(n)
        assert np.all(np.diff(s) >= -1e-12)
        assert np.all(np.diff(s, 2) <= 1e-9)


def test_sample_curve_full_fraction_equals_solve():
    people = generate_city(preset("clustered-metro", 800, seed=2))
    c = MatchConstraints(1.0, None)
    pts = sample_curve(people, [1.0], "endpoints", c, seed=5)
    # sample_curve derives one solver seed per (fraction, repeat) from a SeedSequence
    seed = int(np.random.SeedSequence(5).generate_state(1)[0])
    assert pts[0][1] == pytest.approx(solve(people, c, "endpoints", seed=seed).success_percent)


def test_sample_curve_deterministic():
    people = generate_city(preset("clustered-metro", 600, seed=2))
    c = MatchConstraints(1.0, 10)
    a = sample_curve(people, [0.3, 0.6, 1.0], "endpoints", c, repeats=3, seed=1)
    b = sample_curve(people, [0.3, 0.6, 1.0], "endpoints", c, repeats=3, seed=1)
    assert a == b


def test_sample_curve_rises():
    people = generate_city(preset("clustered-metro", 10_000, seed=0))
    pts = sample_curve(people, [0.2, 0.4, 0.6, 0.8, 1.0], "endpoints", MatchConstraints(1.0, 10), seed=3)
    s = [y for _, y in pts]
    assert all(b >= a - 2.0 for a, b in zip(s, s[1:]))
