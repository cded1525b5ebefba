import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsint import TimeScale, format_scale, parse_scale
from tsint.errors import ExprSyntaxError
from tsint.fuzz import random_scale
from tsint.scalespec import scale_from_json, scale_to_json


def test_grammar_forms():
    assert parse_scale("interval(0,1)") == TimeScale.interval(0, 1)
    assert parse_scale("integers(0,3)") == TimeScale.points([0, 1, 2, 3])
    assert parse_scale("hgrid(0,1,0.25)") == TimeScale.points([0, 0.25, 0.5, 0.75, 1])
    T = parse_scale("union(interval(0,1), point(2), qtail(q=2, at=-2, upto=-1))")
    assert T.min == -2 and T.max == 2 and -1.5 in T and -1.25 not in T


def test_error_column():
    with pytest.raises(ExprSyntaxError) as err:
        parse_scale("union(interval(0,1),, point(2))")
    assert err.value.position == 21


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["mixed", "discrete", "dense"]))
def test_text_and_json_round_trip(seed, kind):
    T = parse_scale(random_scale(np.random.default_rng(seed), kind, 3))
    assert parse_scale(format_scale(T)) == T
    assert scale_from_json(scale_to_json(T)) == T
