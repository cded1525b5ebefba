import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsint import Partition, PointClass, TimeScale, common_refinement, parse_scale
from tsint.errors import MismatchedEndpoints, PointNotInScale
from tsint.expr import parse
from tsint.fuzz import random_scale

Z10 = TimeScale.integers(0, 10)
MIXED = parse_scale("union(interval(0,1),point(2))")
Q2 = parse_scale("union(qtail(q=2,at=0,upto=1),point(1))")


def test_restrict_examples():
    assert parse_scale("union(interval(0,3),point(5))").restrict(0, 3) == TimeScale.interval(0, 3)
    assert Z10.restrict(2, 7) == TimeScale.points([2, 3, 4, 5, 6, 7])
    assert MIXED.restrict(0.5, 2) == parse_scale("union(interval(0.5,1),point(2))")


def test_jump_operators():
    assert Z10.sigma(3) == 4 and Z10.rho(3) == 2 and Z10.mu(3) == 1
    assert MIXED.sigma(0.5) == 0.5 and MIXED.sigma(1) == 2
    assert MIXED.rho(2) == 1 and MIXED.rho(0) == 0
    assert MIXED.mu(0.5) == 0
    for k in range(1, 30):
        assert Q2.sigma(2.0 ** -k) == 2.0 ** (-k + 1)
        assert Q2.mu(2.0 ** -k) == pytest.approx(2.0 ** -k, rel=1e-14)
    assert Q2.sigma(0) == 0 and Q2.mu(0) == 0


def test_extreme_conventions():
    assert Z10.sigma(10) == 10 and Z10.rho(0) == 0


def test_classify_examples():
    assert MIXED.classify(2) == PointClass.ISOLATED
    assert MIXED.classify(0.3) == PointClass.DENSE
    assert MIXED.classify(1) == PointClass.RIGHT_SCATTERED | PointClass.LEFT_DENSE


def test_point_not_in_scale():
    with pytest.raises(PointNotInScale):
        MIXED.sigma(1.5)
    assert 1.5 not in MIXED and 2 in MIXED


def test_touching_components_merge():
    T = parse_scale("union(interval(0,1),point(1),interval(1,2))")
    assert T == TimeScale.interval(0, 2)


def test_make_partition_examples():
    assert TimeScale.points([0, 1, 2, 3]).make_partition(0, 3, 10).points == (0, 1, 2, 3)
    assert TimeScale.interval(0, 1).make_partition(0, 1, 0.5).points == (0, 0.5, 1)
    assert MIXED.make_partition(0, 2, 0.5).points == (0, 0.5, 1, 2)


def test_common_refinement_examples():
    T = TimeScale.interval(0, 4)
    P = lambda *xs: Partition(T, xs)  # noqa: E731
    assert common_refinement(P(0, 2, 4), P(0, 1, 4)).points == (0, 1, 2, 4)
    assert common_refinement(P(0, 2, 4), P(0, 2, 4)) == P(0, 2, 4)
    assert common_refinement(P(0, 4), P(0, 2, 4)).points == (0, 2, 4)
    with pytest.raises(MismatchedEndpoints):
        common_refinement(P(0, 4), P(0, 2))


def test_delta_derivative_examples():
    Z = TimeScale.integers(0, 10)
    assert Z.delta_derivative(parse("t^2"), 3) == 7
    assert TimeScale.interval(0, 1).delta_derivative(parse("t^2"), 0.5) == pytest.approx(1.0, abs=1e-8)
    assert MIXED.delta_derivative(parse("t"), 1) == 1


scales = st.builds(
    lambda seed, kind: parse_scale(random_scale(np.random.default_rng(seed), kind, 3)),
    st.integers(0, 10_000),
    st.sampled_from(["mixed", "discrete", "dense"]),
)


@settings(max_examples=60, deadline=None)
@given(scales, st.integers(0, 10_000))
def test_jump_invariants(T, seed):
    rng = np.random.default_rng(seed)
    for t in T.random_points(rng, 20):
        s, r = T.sigma(t), T.rho(t)
        assert s >= t and r <= t
        assert (T.mu(t) > 0) == bool(T.classify(t) & PointClass.RIGHT_SCATTERED) or t == T.max
        if T.min < t < T.max:
            assert T.sigma(T.rho(s)) == s


@settings(max_examples=60, deadline=None)
@given(scales, st.integers(0, 10_000))
def test_restrict_idempotent(T, seed):
    rng = np.random.default_rng(seed)
    a, b = sorted(T.random_points(rng, 2))
    if a == b:
        return
    R = T.restrict(a, b)
    assert R.restrict(a, b) == R
    assert R.min == a and R.max == b


@settings(max_examples=60, deadline=None)
@given(scales, st.integers(0, 10_000))
def test_partition_semilattice(T, seed):
    rng = np.random.default_rng(seed)
    a, b = T.min, T.max
    if a == b:
        return
    parts = []
    for _ in range(3):
        extra = T.random_points(rng, int(rng.integers(0, 6)), a, b)
        parts.append(Partition(T, (a, b)).refine(extra))
    P1, P2, P3 = parts
    assert common_refinement(P1, P2) == common_refinement(P2, P1)
    assert common_refinement(P1, P1) == P1
    assert common_refinement(common_refinement(P1, P2), P3) == common_refinement(P1, common_refinement(P2, P3))
    J = common_refinement(P1, P2)
    assert J.is_refinement_of(P1) and J.is_refinement_of(P2)
    for P in parts:
        assert np.sum(P.dt) == pytest.approx(b - a, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(scales)
def test_make_partition_contains_scattered_points(T):
    a, b = T.min, T.max
    if a == b:
        return
    P = T.make_partition(a, b, (b - a) / 8)
    for t in P.points[:-1]:
        if T.mu(t) > 0:
            assert T.sigma(t) in P.points


def test_sampled_tail_points_stay_distinct_after_restriction():
    T = parse_scale("union(interval(0,0.836),qtail(q=1.5,at=0.889,upto=1.304),interval(1.695,1.942))")
    blk = T.components[1]
    k = T.tail_cutoff(blk)
    t = float(blk.point(k))
    s = T.sigma(t)
    assert s > t and len(T.restrict(t, s).components) == 2
