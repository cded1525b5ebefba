import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsint.errors import ArityError, DomainError, ExprSyntaxError
from tsint.expr import parse


def test_eval_examples():
    assert parse("t^2 + 3*t")(2) == 10
    assert parse("t*s", arity=2)(2, 3) == 6
    assert parse("exp(t)")(0) == 1
    assert parse("abs(t-1)")(0.25) == 0.75
    with pytest.raises(DomainError):
        parse("1/t")(0)


def test_syntax_error_column():
    with pytest.raises(ExprSyntaxError) as err:
        parse("t +")
    assert err.value.position == 4


def test_s_rejected_in_univariate():
    with pytest.raises((ArityError, ExprSyntaxError)):
        parse("t + s")


def test_precedence():
    assert parse("-t^2")(3) == -9
    assert parse("2^3^2")(0) == 512
    assert parse("8/4/2")(0) == 1
    assert parse("2-3-4")(0) == -5
    assert parse("min(t, 2) + max(t, 2)")(5) == 7


def test_vectorised():
    out = parse("t^2")(np.array([1.0, 2.0]))
    assert np.array_equal(out, [1.0, 4.0])


def test_bounds_enclose_samples():
    f = parse("abs(3*t - 1) + t^2 - exp(t)/(2 + t) + sqrt(t + 2)")
    lo, hi = f.bounds(np.array([0.0, -1.0]), np.array([0.5, 1.0]))
    for i, (a, b) in enumerate([(0.0, 0.5), (-1.0, 1.0)]):
        xs = np.linspace(a, b, 1001)
        v = f(xs)
        assert lo[i] <= v.min() and v.max() <= hi[i]


def test_bounds_division_through_zero():
    with pytest.raises(DomainError):
        parse("1/t").bounds(-1.0, 1.0)


leaves = st.one_of(st.just("t"), st.integers(0, 9).map(str), st.sampled_from(["0.5", "1.25"]))


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda x: f"({x[0]}) {x[1]} ({x[2]})"),
        children.map(lambda c: f"-({c})"),
        children.map(lambda c: f"abs({c})"),
        st.tuples(children, children).map(lambda x: f"min({x[0]}, {x[1]})"),
        st.tuples(children, children).map(lambda x: f"max({x[0]}, {x[1]})"),
        children.map(lambda c: f"({c})^2"),
    )


exprs = st.recursive(leaves, _combine, max_leaves=8)


@settings(max_examples=200, deadline=None)
@given(exprs, st.floats(-3, 3))
def test_source_round_trip(src, t):
    f = parse(src)
    g = parse(f.source)
    assert g.source == f.source
    a, b = f(t), g(t)
    assert a == b or (math.isnan(a) and math.isnan(b))
