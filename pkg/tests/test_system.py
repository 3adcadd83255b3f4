import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asfkit.errors import DegenerateSpectrum, NonFinite, RootNotFound, SideMismatch
from asfkit.system import (
    branches_for,
    builtin_system,
    check_assumption_NH,
    classify_spectrum,
    continue_branch,
    custom_system,
    eval_full_rhs,
    max_partials_error,
    newton,
    pws_limit,
    slow_manifold_point,
    tipping_pitchfork,
    tracking_cubic,
    with_fd_partials,
)
from oracles import tipping_rhs, tracking_rhs


# ------------------------------------------------------------ eval_full_rhs


@pytest.mark.parametrize("eps", [1e-3, 0.1, 1.0])
def test_tipping_full_rhs_at_origin(tipping, eps):
    assert eval_full_rhs(tipping, [0.0], 0.0, 1.0, 0.0, eps)[0] == pytest.approx(-eps / 4, rel=1e-14)


def test_tracking_full_rhs_at_origin(tracking):
    assert eval_full_rhs(tracking, [0.0], 0.0, 1.0, 0.0, 1e-3)[0] == pytest.approx(1e-3, rel=1e-14)


def test_full_rhs_far_past_matches_minus_limit(tipping):
    eps = 1e-3
    s = -1e6 * eps
    x = 0.3
    got = eval_full_rhs(tipping, [x], s, 1.0, 0.0, eps)[0]
    assert abs(got - (-x + 0.25 * math.sin(s))) <= 1e-6


def test_full_rhs_requires_positive_eps(tipping):
    with pytest.raises(ValueError):
        eval_full_rhs(tipping, [0.0], 0.0, 1.0, 0.0, 0.0)


def test_full_rhs_nonfinite():
    sys = custom_system(rhs="exp(x)")
    with pytest.raises(NonFinite):
        eval_full_rhs(sys, [1000.0], 0.0, 1.0, 0.0, 1e-3)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-1, 1), st.floats(0.1, 4), st.floats(-1, 1), st.floats(1e-4, 0.1))
def test_full_rhs_matches_formula(x, s, mu, sigma, eps):
    sys = tipping_pitchfork()
    g = 0.5 * (1 + (mu * s / eps) / math.sqrt(1 + (mu * s / eps) ** 2))
    assert eval_full_rhs(sys, [x], s, mu, sigma, eps)[0] == pytest.approx(tipping_rhs(x, g, s, sigma, eps), abs=1e-12)


# --------------------------------------------------------------- pws_limit


@pytest.mark.parametrize(
    "builder, side, x, expected",
    [
        (tipping_pitchfork, "minus", 1.0, -1.0),
        (tipping_pitchfork, "plus", 1.0, 0.0),
        (tracking_cubic, "plus", 0.5, -3 / 8),
        (tracking_cubic, "minus", 0.5, -0.5),
    ],
)
def test_pws_limit_values(builder, side, x, expected):
    assert pws_limit(builder(), side, [x], 0.0, 0.3)[0] == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("side, s", [("minus", 0.1), ("plus", -0.1)])
def test_pws_limit_side_mismatch(tipping, side, s):
    with pytest.raises(SideMismatch):
        pws_limit(tipping, side, [0.0], s, 0.0)


# ---------------------------------------------------------------- partials


@pytest.mark.parametrize("builder", [tipping_pitchfork, tracking_cubic])
def test_fd_partials_agree_with_analytic(builder):
    assert max_partials_error(builder(), n_points=100) <= 1e-5


def test_with_fd_partials_mode(tipping):
    assert with_fd_partials(tipping).partials_mode == "finite-difference"


@settings(max_examples=100, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(0, 1))
def test_tracking_jacobian_formula(x, g):
    J = tracking_cubic().jac_x(np.array([x]), g, 0.3, 0.0, 1e-3)
    assert J[0, 0] == pytest.approx(-1 + 3 * g * x * x, abs=1e-14)


def test_builtin_system_lookup():
    assert builtin_system("tipping-pitchfork", A=0.1).params["A"] == 0.1
    with pytest.raises(KeyError):
        builtin_system("custom")


def test_builtin_systems_pickle_round_trip(tipping):
    clone = pickle.loads(pickle.dumps(tipping))
    x = np.array([0.4])
    assert np.array_equal(clone.rhs(x, 0.3, 0.1, 0.2, 1e-3), tipping.rhs(x, 0.3, 0.1, 0.2, 1e-3))


def test_custom_system_triple_form():
    sys = custom_system(F_minus="-x", F_plus="x*(1-x^2)", forcing="A*sin(s) + eps*(sigma - g^2)", A=0.25)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, g, s, sig, e = rng.uniform(-1, 1, 5)
        assert sys.rhs(np.array([x]), g, s, sig, e)[0] == pytest.approx(tipping_rhs(x, g, s, sig, e), abs=1e-14)


# ----------------------------------------------------------------- newton


def test_newton_simple_root():
    x = newton(lambda v: v ** 2 - 2.0, lambda v: np.array([[2 * v[0]]]), np.array([1.0]))
    assert abs(x[0] - math.sqrt(2)) <= 1e-10


def test_newton_no_root():
    with pytest.raises(RootNotFound):
        newton(lambda v: v ** 2 + 1.0, lambda v: np.array([[2 * v[0]]]), np.array([1.0]), max_iter=30)


@pytest.mark.parametrize(
    "eigs, kind",
    [([-1.0], "attracting"), ([1.0], "repelling"), ([-1.0, 2.0], "saddle"), ([-1 + 1j, -1 - 1j], "attracting")],
)
def test_classify_spectrum(eigs, kind):
    assert classify_spectrum(np.array(eigs)) == kind


# --------------------------------------------------------- continuation


def test_minus_branch_is_forcing(tipping):
    br = continue_branch(tipping, "minus", [0.0], (0.0, -1.0), 0.3, root_tol=1e-10)
    assert br.stability == "attracting"
    assert np.max(np.abs(br.x[:, 0] - 0.25 * np.sin(br.s))) <= 1e-10
    J = [tipping.jac_x(x, 0.0, s, 0.3, 0.0)[0, 0] for s, x in zip(br.s, br.x)]
    assert np.allclose(J, -1.0)
    assert np.max(np.diff(br.s) ** 2) ** 0.5 <= 0.01 + 1e-12


def test_plus_branches(tipping):
    brs = branches_for(tipping, 0.3, rho=1.0)
    assert brs["upper"].stability == "attracting"
    assert brs["lower"].stability == "attracting"
    assert brs["middle"].stability == "repelling"
    assert brs["upper"].h(0.0)[0] == pytest.approx(1.0, abs=1e-10)
    assert brs["middle"].h(0.0)[0] == pytest.approx(0.0, abs=1e-10)
    assert brs["middle"].eigen_at_boundary[0].real == pytest.approx(1.0, abs=1e-10)
    # eigenvalue 1 + O(s) along the middle branch
    mid = brs["middle"]
    ev = [tipping.jac_x(x, 1.0, s, 0.3, 0.0)[0, 0] for s, x in zip(mid.s, mid.x)]
    assert abs(ev[1] - 1.0) <= 5 * mid.s[1]


@pytest.mark.parametrize("label", ["S-", "upper", "middle", "lower"])
def test_branch_residuals(tipping, label):
    root_tol = 1e-10
    br = branches_for(tipping, 0.37, rho=1.0, root_tol=root_tol)[label]
    g = 0.0 if br.side == "minus" else 1.0
    res = [abs(tipping.rhs(x, g, s, 0.37, 0.0)[0]) for s, x in zip(br.s, br.x)]
    assert max(res) <= root_tol
    mids = 0.5 * (br.s[1:] + br.s[:-1])
    res_mid = [abs(tipping.rhs(np.atleast_1d(br.h(s)), g, s, 0.37, 0.0)[0]) for s in mids]
    assert max(res_mid) <= 10 * root_tol


def test_branch_h_outside_range(tipping):
    br = continue_branch(tipping, "minus", [0.0], (0.0, -0.5), 0.0)
    with pytest.raises(ValueError):
        br.h(0.2)


def test_fold_truncates_branch():
    # x^2 = s - 1/2 has roots only for s >= 1/2; continuing down from s = 1 folds there
    sys = custom_system(F_minus="-x", F_plus="x^2 - (s - 0.5)", forcing="0")
    br = continue_branch(sys, "plus", [math.sqrt(0.5)], (1.0, 0.0), 0.0, step=0.01)
    assert br.fold
    assert 0.5 - 1e-3 < br.s[0] < 0.52  # samples are stored in increasing s


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(0.05, 0.45))
def test_minus_branch_residual_property(sigma, A):
    sys = tipping_pitchfork(A=A)
    br = continue_branch(sys, "minus", [0.0], (0.0, -1.0), sigma, step=0.05, root_tol=1e-10)
    g = 0.0
    assert max(abs(sys.rhs(x, g, s, sigma, 0.0)[0]) for s, x in zip(br.s, br.x)) <= 1e-10


def test_slow_manifold_point_is_near_branch(tipping):
    br = continue_branch(tipping, "minus", [0.0], (0.0, -1.0), 0.3)
    eps = 1e-3
    x, corrected = slow_manifold_point(tipping, br, -1.0, 1.0, 0.3, eps)
    assert corrected
    assert abs(x[0] - br.h(-1.0)[0]) <= 10 * eps


# ---------------------------------------------------------- assumption NH


def test_nh_tipping(tipping):
    rep = check_assumption_NH(tipping, [0.0, 0.3, 0.4])
    assert rep.passed and rep.tipping_hypothesis
    for pm, pp in rep.pairs:
        assert pm.x[0] == pytest.approx(0.0, abs=1e-12) and pp.x[0] == pytest.approx(0.0, abs=1e-12)
        assert pm.spectrum[0].real == pytest.approx(-1.0) and pp.spectrum[0].real == pytest.approx(1.0)
    assert rep.min_distance == pytest.approx(1.0)
    found = sorted(float(r[0]) for r in rep.other_roots[("plus", 0.3)])
    assert found == pytest.approx([-1.0, 1.0], abs=1e-10)


def test_nh_tracking(tracking):
    rep = check_assumption_NH(tracking, [0.0])
    assert rep.passed
    assert rep.pairs[0][1].spectrum[0].real == pytest.approx(-1.0)
    assert not rep.tipping_hypothesis


def test_nh_degenerate():
    sys = custom_system(F_minus="x^2", F_plus="x", forcing="0")
    with pytest.raises(DegenerateSpectrum):
        check_assumption_NH(sys, [0.0])


def test_nh_missing_seed():
    sys = custom_system(F_minus="x^2 + 1", F_plus="x", forcing="0")
    with pytest.raises(RootNotFound):
        check_assumption_NH(sys, [0.0])


def test_tracking_rhs_oracle(tracking):
    for x, g, s in [(0.1, 0.2, 0.3), (-0.5, 1.0, -1.0), (0.4, 0.0, 0.9)]:
        assert tracking.rhs(np.array([x]), g, s, 0.0, 1e-3)[0] == pytest.approx(tracking_rhs(x, g, s, 0.0, 1e-3))
