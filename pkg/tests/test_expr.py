import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pencilkit import expr as ex
from pencilkit.errors import EvalDomainError, ExprSyntaxError, UnknownIdentifier

NAMES = ("x1", "x2")


def p(text):
    return ex.parse(text, NAMES)


def central_diff(e, name, point, h=1e-6):
    i = NAMES.index(name)
    a = np.array(point, dtype=float)
    b = a.copy()
    a[i] += h
    b[i] -= h
    return (ex.evaluate(e, a, NAMES) - ex.evaluate(e, b, NAMES)) / (2 * h)


# -- parsing ----------------------------------------------------------------

def test_parse_literal_zero():
    e = p("0")
    assert e.is_zero()


def test_parse_tree_shape():
    e = p("x1^2 * sin(x2)")
    assert e.op == ex.MUL
    kinds = sorted(a.op for a in e.args)
    assert kinds == sorted([ex.POW, ex.SIN])


def test_parse_evaluate_exp_quotient():
    assert ex.evaluate(p("exp(x1+x2)/x1"), (1.0, 0.0), NAMES) == pytest.approx(math.e, rel=1e-12)


def test_parse_errors_carry_position():
    with pytest.raises(ExprSyntaxError) as info:
        p("x1 + * x2")
    assert info.value.position == 5
    with pytest.raises(UnknownIdentifier):
        p("y + 1")
    with pytest.raises(ExprSyntaxError):
        p("x1^1.5")


# -- differentiation ------------------------------------------------------

def test_derivative_of_constant_is_zero():
    assert ex.differentiate(p("3.5"), "x1").is_zero()


def test_power_rule():
    d = ex.differentiate(p("x1^2 * sin(x2)"), "x1")
    for pt in [(0.3, 1.1), (1.7, -0.4)]:
        assert ex.evaluate(d, pt, NAMES) == pytest.approx(2 * pt[0] * math.sin(pt[1]), rel=1e-12)


def test_exp_derivative_matches_finite_difference():
    e = p("exp(x1*x2)")
    d = ex.differentiate(e, "x2")
    assert ex.evaluate(d, (1, 1), NAMES) == pytest.approx(math.e, rel=1e-12)
    assert ex.evaluate(d, (1, 1), NAMES) == pytest.approx(central_diff(e, "x2", (1, 1)), rel=1e-6)


# -- evaluation -------------------------------------------------------------

def test_domain_error():
    with pytest.raises(EvalDomainError):
        ex.evaluate(p("1/x1"), (0.0, 0.0), NAMES)
    with pytest.raises(EvalDomainError):
        ex.evaluate(p("log(x1)"), (-1.0, 0.0), NAMES)


def test_pythagorean_identity(rng):
    e = p("sin(x1)^2 + cos(x1)^2")
    vals = ex.evaluate_array([e], rng.uniform(-10, 10, (50, 2)), NAMES)
    assert np.allclose(vals, 1.0, atol=1e-12)


def test_evaluation_is_bit_deterministic(rng):
    e = p("exp(x1)*sin(x2)/(1+x1^2) - sqrt(x1^2+x2^2)")
    pts = rng.uniform(-2, 2, (64, 2))
    a = ex.evaluate_array([e], pts, NAMES)
    b = ex.evaluate_array([e], pts, NAMES)
    assert a.tobytes() == b.tobytes()


# -- simplification ----------------------------------------------------------

def test_simplify_rules():
    f = p("sin(x1)")
    assert ex.simplify(ex.const(0) * f).is_zero()
    assert ex.simplify(f ** 1) == f or str(ex.simplify(f ** 1)) == str(f)


def test_simplify_preserves_value(rng):
    e = ex.simplify(p("x1 + x1"))
    pts = rng.uniform(-5, 5, (100, 2))
    assert np.allclose(ex.evaluate_array([e], pts, NAMES)[:, 0], 2 * pts[:, 0], rtol=0, atol=1e-12)


# -- property tests ---------------------------------------------------------

LEAVES = st.sampled_from(["x1", "x2", "1.5", "2", "0.5"])


def _node(children):
    unary = st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: f"{t[0]}({t[1]})")
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})")
    power = st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}")
    return unary | binary | power


EXPRS = st.recursive(LEAVES, _node, max_leaves=8)


@settings(max_examples=60, deadline=None)
@given(EXPRS, st.floats(-1, 1), st.floats(-1, 1))
def test_derivative_agrees_with_finite_differences(text, a, b):
    e = p(text)
    pt = (a, b)
    val = ex.evaluate(e, pt, NAMES)
    if not np.isfinite(val) or abs(val) > 1e6:
        return
    for name in NAMES:
        d = ex.evaluate(ex.differentiate(e, name), pt, NAMES)
        fd = central_diff(e, name, pt, 1e-5)
        assert d == pytest.approx(fd, rel=1e-4, abs=1e-5 * (1 + abs(val)))


@settings(max_examples=60, deadline=None)
@given(EXPRS, st.floats(-1, 1), st.floats(-1, 1))
def test_printed_form_reparses_to_same_values(text, a, b):
    e = p(text)
    again = p(ex.to_string(e))
    x = ex.evaluate(e, (a, b), NAMES)
    y = ex.evaluate(again, (a, b), NAMES)
    assert y == pytest.approx(x, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(EXPRS, st.floats(-1, 1), st.floats(-1, 1))
def test_simplify_is_value_preserving(text, a, b):
    e = p(text)
    assert ex.evaluate(ex.simplify(e), (a, b), NAMES) == pytest.approx(ex.evaluate(e, (a, b), NAMES),
                                                                       rel=1e-10, abs=1e-10)
