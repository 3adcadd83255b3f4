import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asfkit.blowup import (
    ChartPoint,
    best_chart,
    blow_down,
    chart_rhs,
    chart_transition,
    conjugacy_defect,
    k2_trajectory,
    round_trip_residual,
)
from asfkit.errors import OutOfOverlap
from asfkit.integrator import SolveSettings, simulate
from asfkit.system import tipping_pitchfork, tracking_cubic


def test_blow_down_examples():
    x, s, e = blow_down(ChartPoint("K2", [0.2], (1e-3, 7.0)))
    assert (s, e) == pytest.approx((7e-3, 1e-3))
    x, s, e = blow_down(ChartPoint("K1", [0.2], (0.3, 0.01)))
    assert (s, e) == pytest.approx((-0.3, 0.003))
    x, s, e = blow_down(ChartPoint("K3", [0.2], (0.0, 0.4)))
    assert s == 0.0 and e == 0.0


@pytest.mark.parametrize("chart, coords", [("K1", (-0.1, 0.2)), ("K1", (0.1, -0.2)), ("K2", (-1e-3, 1.0)),
                                           ("K3", (0.1, -1.0)), ("K4", (0.1, 0.1))])
def test_invalid_chart_points(chart, coords):
    with pytest.raises(ValueError):
        ChartPoint(chart, [0.0], coords)


def test_k2_allows_negative_s2():
    assert ChartPoint("K2", [0.0], (0.1, -3.0)).coords == (0.1, -3.0)


def test_transition_examples():
    p = chart_transition(ChartPoint("K2", [0.1], (0.01, -4.0)), "K1")
    assert p.chart == "K1" and p.coords == pytest.approx((0.04, 0.25), rel=1e-15)
    with pytest.raises(OutOfOverlap):
        chart_transition(ChartPoint("K2", [0.1], (0.01, 4.0)), "K1")
    q = chart_transition(ChartPoint("K3", [0.1], (0.04, 0.25)), "K2")
    assert q.chart == "K2" and q.coords == pytest.approx((0.01, 4.0), rel=1e-15)


@pytest.mark.parametrize(
    "p, target",
    [
        (ChartPoint("K1", [0.0], (0.3, 0.0)), "K2"),
        (ChartPoint("K3", [0.0], (0.3, 0.0)), "K2"),
        (ChartPoint("K2", [0.0], (0.3, 0.0)), "K3"),
        (ChartPoint("K2", [0.0], (0.3, 0.0)), "K1"),
        (ChartPoint("K1", [0.0], (0.3, 0.2)), "K3"),
        (ChartPoint("K3", [0.0], (0.3, 0.2)), "K1"),
    ],
)
def test_out_of_overlap(p, target):
    with pytest.raises(OutOfOverlap):
        chart_transition(p, target)


def test_identity_transition():
    p = ChartPoint("K2", [0.3], (0.1, 2.0))
    assert chart_transition(p, "K2") is p


def test_k2_on_cylinder_is_limit_problem():
    sys = tipping_pitchfork()
    p = ChartPoint("K2", [0.3], (0.0, 1.5))
    d = chart_rhs(sys, p, 1.0, 0.2)
    g = sys.ramp(1.5)
    assert d[0] == pytest.approx(sys.rhs(np.array([0.3]), g, 0.0, 0.2, 0.0)[0], rel=1e-15)
    assert d[1] == 0.0 and d[2] == 1.0


def test_k1_layer_at_eps1_zero():
    sys = tipping_pitchfork()
    d = chart_rhs(sys, ChartPoint("K1", [0.4], (0.3, 0.0)), 1.0, 0.2)
    assert d[1] == 0.0 and d[2] == 0.0
    assert d[0] == pytest.approx(-0.4 + 0.25 * np.sin(-0.3), rel=1e-15)


def test_k3_equilibrium_at_origin():
    sys = tipping_pitchfork()
    d = chart_rhs(sys, ChartPoint("K3", [0.0], (0.0, 0.0)), 1.0, 0.3)
    assert np.all(d == 0.0)


def test_chart_window_precondition():
    sys = tipping_pitchfork()
    with pytest.raises(ValueError):
        chart_rhs(sys, ChartPoint("K1", [0.0], (0.1, 0.8)), 1.0, 0.0)
    chart_rhs(sys, ChartPoint("K1", [0.0], (0.1, 0.8)), 1.0, 0.0, delta_chart=1.0)


_x = st.floats(-1.5, 1.5)
_r = st.floats(1e-4, 0.5)
_e = st.floats(1e-3, 0.5)


@settings(max_examples=200, deadline=None)
@given(_x, _r, _e, st.sampled_from(["K1", "K3"]))
def test_round_trip_through_k2(x, r, e, chart):
    p = ChartPoint(chart, [x], (r, e))
    assert round_trip_residual(p, "K2") <= 4 * np.finfo(float).eps * max(1.0, 1 / e)


@settings(max_examples=200, deadline=None)
@given(_x, _r, st.floats(2.0, 1e3), st.sampled_from([-1.0, 1.0]))
def test_round_trip_from_k2(x, r, s2abs, sign):
    p = ChartPoint("K2", [x], (r, sign * s2abs))
    target = "K1" if sign < 0 else "K3"
    assert round_trip_residual(p, target) <= 4 * np.finfo(float).eps * s2abs


@settings(max_examples=100, deadline=None)
@given(_x, _r, _e, st.sampled_from(["K1", "K3"]), st.floats(0.25, 4.0), st.floats(-0.5, 0.5),
       st.sampled_from([tipping_pitchfork, tracking_cubic]))
def test_conjugacy(x, r, e, chart, mu, sigma, builder):
    sys = builder()
    p = ChartPoint(chart, [x], (r, e))
    assert conjugacy_defect(sys, p, "K2", mu, sigma) <= 1e-8
    q = chart_transition(p, "K2")
    assert conjugacy_defect(sys, q, chart, mu, sigma) <= 1e-8


def test_best_chart_windows():
    assert best_chart(1e-3, -5.0, [0.0]).chart == "K1"
    assert best_chart(1e-3, 5.0, [0.0]).chart == "K3"
    assert best_chart(1e-3, 1.0, [0.0]).chart == "K2"


def test_k2_trajectory_matches_full_system():
    sys = tipping_pitchfork()
    eps, mu, sigma = 1e-3, 1.0, 0.3
    t, xs = k2_trajectory(sys, [0.05], (-20.0, 20.0), eps, mu, sigma, n_out=81, rtol=1e-12, atol=1e-14)
    tr = simulate(sys, [0.05], -20 * eps, mu, sigma, eps, 20 * eps,
                  SolveSettings(rel_tol=1e-12, abs_tol=1e-14, method="explicit-adaptive"))
    for ti, xi in zip(t, xs):
        s = blow_down(best_chart(eps, ti, xi))[1]
        assert s == pytest.approx(eps * ti, abs=1e-15)
        assert tr.x_at(s)[0] == pytest.approx(xi[0], abs=1e-9)
