import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asfkit.exprparse import (
    FUNCTIONS,
    SYSTEM_VARIABLES,
    BinOp,
    Call,
    DomainError,
    ExpressionSyntaxError,
    Neg,
    Num,
    UnboundVariable,
    UnknownIdentifier,
    Var,
    compile_expr,
    evaluate,
    free_variables,
    parse,
    unparse,
)
from asfkit.system import custom_system, tipping_pitchfork, tracking_cubic


@pytest.mark.parametrize(
    "src, bindings, expected",
    [
        ("x*(1 - x^2)", {"x": 2.0}, -6.0),
        ("A*sin(s) + eps*(sigma - g^2)", {"A": 0.0, "s": 0.3, "eps": 1.0, "sigma": 0.0, "g": 0.5}, -0.25),
        ("-x", {"x": 3.0}, -3.0),
        ("sin(0)", {}, 0.0),
        ("x^3", {"x": -2.0}, -8.0),
        ("2^3^2", {}, 512.0),
        ("-2^2", {}, -4.0),
        ("2^-1", {}, 0.5),
        ("1 - 2 - 3", {}, -4.0),
        ("8 / 4 / 2", {}, 1.0),
        ("2 + 3*4", {}, 14.0),
        ("(2 + 3)*4", {}, 20.0),
        ("  abs( -1.5e0 )  ", {}, 1.5),
        ("sqrt(4) + exp(0) + cos(0) + tanh(0)", {}, 4.0),
        ("--x", {"x": 2.0}, 2.0),
        (".5 + 1.", {}, 1.5),
    ],
)
def test_evaluate_hand_values(src, bindings, expected):
    assert evaluate(parse(src), bindings) == pytest.approx(expected, abs=1e-15)


def test_incomplete_expression_offset():
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse("x +")
    assert exc.value.offset == 3
    assert exc.value.expected


@pytest.mark.parametrize("src, offset", [("(x", 2), ("x y", 2), ("sin x", 4), ("*x", 0), ("x $ 1", 2), ("", 0)])
def test_syntax_error_locations(src, offset):
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse(src)
    assert exc.value.offset == offset


def test_unknown_identifier_and_function():
    with pytest.raises(UnknownIdentifier):
        parse("y + 1")
    with pytest.raises((UnknownIdentifier, ExpressionSyntaxError)):
        parse("log(x)")


def test_unbound_variable():
    with pytest.raises(UnboundVariable):
        evaluate(parse("x + s"), {"x": 1.0})


@pytest.mark.parametrize("src", ["sqrt(-1)", "1/0", "x/(x-x)"])
def test_domain_errors(src):
    with pytest.raises(DomainError):
        evaluate(parse(src), {"x": 1.0})


def test_compiled_matches_evaluate():
    e = parse("g*x*(1-x^2) - (1-g)*x + A*sin(s) + eps*(sigma - g^2)")
    f = compile_expr(e)
    rng = np.random.default_rng(1)
    for _ in range(50):
        b = {k: float(v) for k, v in zip(["x", "g", "s", "sigma", "eps", "A"], rng.uniform(-2, 2, 6))}
        assert f(b) == evaluate(e, b)


def test_free_variables():
    assert free_variables(parse("x*sin(s) + 2")) == {"x", "s"}


_leaf = st.one_of(
    st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False).map(Num),
    st.sampled_from(sorted(SYSTEM_VARIABLES)).map(Var),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: BinOp(*t)),
        st.tuples(st.sampled_from(sorted(FUNCTIONS)), children).map(lambda t: Call(*t)),
    )


@settings(max_examples=300, deadline=None)
@given(st.recursive(_leaf, _extend, max_leaves=20))
def test_unparse_round_trip(tree):
    assert parse(unparse(tree)) == tree


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 0.1))
def test_parsed_tipping_matches_builtin(x, g, s, sigma, eps):
    e = parse("g*x*(1-x^2) - (1-g)*x + A*sin(s) + eps*(sigma - g^2)")
    got = evaluate(e, {"x": x, "g": g, "s": s, "sigma": sigma, "eps": eps, "A": 0.25})
    ref = tipping_pitchfork().rhs(np.array([x]), g, s, sigma, eps)[0]
    assert got == pytest.approx(ref, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize(
    "builtin, expr",
    [
        (tipping_pitchfork, "g*x*(1-x^2) - (1-g)*x + A*sin(s) + eps*(sigma - g^2)"),
        (tracking_cubic, "-g*x*(1-x^2) - (1-g)*x + A*sin(s) + eps"),
    ],
)
def test_fd_partials_of_parsed_systems_match_analytic(builtin, expr):
    ref = builtin(A=0.25)
    cus = custom_system(rhs=expr, A=0.25)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        x = np.array([rng.uniform(-1.5, 1.5)])
        g, s, sigma, eps = rng.uniform(0, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 0.1)
        for name in ("jac_x", "d_s", "d_eps", "d_gamma", "d_sigma"):
            a = np.ravel(getattr(ref, name)(x, g, s, sigma, eps))
            b = np.ravel(getattr(cus, name)(x, g, s, sigma, eps))
            worst = max(worst, float(np.max(np.abs(a - b))))
    assert worst <= 1e-5


def test_exp_overflow_is_inf():
    assert math.isinf(evaluate(parse("exp(1000)"), {}))
