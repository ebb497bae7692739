"""Expression arithmetic: parsing, canonical forms, evaluation, derivatives."""

import random
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from pmcverify.expr import (
    ExprError,
    ExprSyntaxError,
    Polynomial,
    RationalFunction,
    SingularEvaluation,
    canonical_params,
    parse_expr,
)

P = ("p",)
PQ = ("p", "q")


def rf(text, params=PQ):
    return parse_expr(text, params)


# -- parsing ----------------------------------------------------------------


def test_parse_one_minus_p():
    f = parse_expr("1 - p", P)
    assert f.den == Polynomial.constant(P, 1)
    assert f.num.terms == {(1,): Fraction(-1), (0,): Fraction(1)}


def test_parse_quotient_keeps_parts():
    f = parse_expr("(1-p1)/p2", ("p1", "p2"))
    assert f.num.terms == {(1, 0): Fraction(-1), (0, 0): Fraction(1)}
    assert f.den.terms == {(0, 1): Fraction(1)}


def test_parse_undeclared_parameter_reports_position():
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("p + q", P)
    assert "q" in str(err.value)
    assert err.value.pos == 4


def test_parse_garbage_reports_position():
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("p + $", P)
    assert err.value.pos == 4


def test_parse_unbalanced_parenthesis():
    with pytest.raises(ExprSyntaxError):
        parse_expr("(p + 1", P)


def test_parse_trailing_tokens_rejected():
    with pytest.raises(ExprSyntaxError):
        parse_expr("p 1", P)


def test_decimal_literal_is_exact():
    f = parse_expr("0.26", ())
    assert f.constant_value() == Fraction(26, 100)


def test_power_expands():
    f = parse_expr("p^3", P)
    assert f.num.terms == {(3,): Fraction(1)}


def test_fractional_exponent_rejected():
    with pytest.raises(ExprSyntaxError):
        parse_expr("p^1.5", P)


def test_division_by_literal_zero_rejected():
    with pytest.raises(ExprSyntaxError):
        parse_expr("1/0", P)
    with pytest.raises(ExprSyntaxError):
        parse_expr("1/(2-2)", P)


def test_unary_minus():
    f = parse_expr("-p + 1", P)
    assert f == parse_expr("1 - p", P)


# -- canonicalization -------------------------------------------------------


def test_commuted_sums_are_structurally_equal():
    assert rf("p + q") == rf("q + p")
    assert rf("(p + q)*(p - q)") == rf("p^2 - q^2")


def test_cancellation_to_constant():
    one = rf("p + (1 - p)")
    assert one.is_constant() and one.constant_value() == 1


def test_denominator_leading_coefficient_normalized():
    f = rf("p / (2*q)")
    assert f.den.terms == {(0, 1): Fraction(1)}
    assert f.num.terms == {(1, 0): Fraction(1, 2)}


def test_unreduced_product_keeps_factor():
    f = rf("p/q").mul(rf("q"))
    assert f.num.terms == {(1, 1): Fraction(1)}  # p*q
    assert f.den.terms == {(0, 1): Fraction(1)}  # q
    assert f.eval({"p": 0.3, "q": 0.7}) == pytest.approx(0.3)


def test_zero_numerator_resets_denominator():
    z = rf("p/q").sub(rf("p/q"))
    assert z.num.is_zero()
    assert z.den == Polynomial.constant(PQ, 1)


# -- evaluation -------------------------------------------------------------


def test_eval_example():
    f = rf("p/(1-(1-p)*q)")
    assert f.eval({"p": 0.5, "q": 0.5}) == pytest.approx(2 / 3, abs=1e-15)


def test_eval_zero_case():
    assert parse_expr("1-p", P).eval({"p": 1.0}) == 0.0


def test_eval_pole_raises():
    with pytest.raises(SingularEvaluation):
        parse_expr("1/(1-p)", P).eval({"p": 1.0})


def test_eval_missing_parameter():
    with pytest.raises(ExprError):
        rf("p*q").eval({"p": 0.5})


def test_eval_ignores_unused_context_parameters():
    # q is in the context but not in the expression
    assert rf("p").eval({"p": 0.25}) == 0.25


def test_division_by_identically_zero_operand():
    zero = RationalFunction.constant(PQ, 0)
    with pytest.raises(ExprError):
        rf("p").div(zero)


# -- derivatives ------------------------------------------------------------


def test_partial_derivative_polynomial():
    f = rf("p*q + p^2")
    assert f.partial_derivative("p") == rf("q + 2*p")


def test_partial_derivative_absent_parameter():
    d = parse_expr("1-p", P).partial_derivative("q")
    assert d.num.is_zero()


def test_partial_derivative_quotient_against_finite_differences():
    f = rf("p/(1-q)")
    d = f.partial_derivative("q")
    v = {"p": 0.5, "q": 0.5}
    h = 1e-6
    fd = (f.eval({"p": 0.5, "q": 0.5 + h}) - f.eval({"p": 0.5, "q": 0.5 - h})) / (2 * h)
    assert abs(d.eval(v) - fd) / abs(fd) <= 1e-5


# -- printing round-trip ----------------------------------------------------


def test_round_trip_simple():
    for text in ["1 - p", "(1-p)/q", "p^2*q + 1/2", "0.26          ", "-p - q"]:
        f = rf(text)
        assert parse_expr(f.to_text(), PQ) == f


# -- randomized properties --------------------------------------------------


def _leaf_pool():
    return [
        rf("p"),
        rf("q"),
        rf("1-p"),
        rf("1-q"),
        rf("0.3"),
        rf("2"),
        rf("p*q"),
        rf("1/2 + p/4"),
    ]


@st.composite
def rational_functions(draw, max_ops=4):
    pool = _leaf_pool()
    f = draw(st.sampled_from(pool))
    for _ in range(draw(st.integers(0, max_ops))):
        g = draw(st.sampled_from(pool))
        op = draw(st.sampled_from(["add", "sub", "mul", "div"]))
        if op == "div" and g.num.is_zero():
            continue
        f = getattr(f, op)(g)
    return f


@st.composite
def interior_valuations(draw):
    return {
        "p": draw(st.floats(0.05, 0.95, allow_nan=False)),
        "q": draw(st.floats(0.05, 0.95, allow_nan=False)),
    }


def _defined(f, v):
    return abs(float(f.den.eval_exact({k: Fraction(x) for k, x in v.items()}))) > 1e-9


@settings(max_examples=60, deadline=None)
@given(rational_functions(), rational_functions(), interior_valuations())
def test_arithmetic_matches_pointwise(f, g, v):
    assume(_defined(f, v) and _defined(g, v))
    fv, gv = f.eval(v), g.eval(v)
    for op, expect in [("add", fv + gv), ("sub", fv - gv), ("mul", fv * gv)]:
        r = getattr(f, op)(g)
        assume(_defined(r, v))
        got = r.eval(v)
        assert got == pytest.approx(expect, rel=1e-10, abs=1e-10)
    if not g.num.is_zero() and abs(gv) > 1e-6:
        r = f.div(g)
        assume(_defined(r, v))
        assert r.eval(v) == pytest.approx(fv / gv, rel=1e-10, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(rational_functions())
def test_print_parse_round_trip(f):
    assert parse_expr(f.to_text(), PQ) == f


@settings(max_examples=40, deadline=None)
@given(rational_functions(), interior_valuations())
def test_derivative_matches_finite_differences(f, v):
    h = 1e-6
    for name in PQ:
        d = f.partial_derivative(name)
        shifted = []
        ok = True
        for sign in (1, -1):
            w = dict(v)
            w[name] = v[name] + sign * h
            if not _defined(f, w):
                ok = False
                break
            shifted.append(f.eval(w))
        assume(ok and _defined(f, v) and _defined(d, v))
        exact = d.eval(v)
        assume(abs(exact) < 1e8)  # keep finite-difference truncation error relevant
        fd = (shifted[0] - shifted[1]) / (2 * h)
        assert abs(exact - fd) <= 1e-5 * max(abs(exact), 1.0) + 1e-7


def test_canonical_params_rejects_bad_names():
    with pytest.raises(ExprError):
        canonical_params(["2p"])
    with pytest.raises(ExprError):
        canonical_params(["p", "p"])
