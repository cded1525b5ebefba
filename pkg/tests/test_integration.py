import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsint import (
    Partition,
    TimeScale,
    cumulative,
    darboux_bounds,
    linearity_check,
    parse,
    parse_scale,
    rs_integral,
    rs_integral_via_transition,
    rs_sum,
)
from tsint.errors import EndpointNotInScale, NoConvergence, NonMonotoneIntegrator, SelectionOutOfCell
from tsint.fuzz import continuous_expr, integrator_expr, random_scale

ID = parse("t")
Q2 = parse_scale("union(qtail(q=2,at=0,upto=1),point(1))")


def finite_sum(points, f, g):
    """Independent oracle: Σ f(t_i)(g(t_{i+1}) - g(t_i)) with scalar evaluation."""
    return math.fsum(f(float(a)) * (g(float(b)) - g(float(a))) for a, b in zip(points, points[1:]))


def q_series(q, f, g, at=0.0, upto=1.0, n=200):
    pts = [at + (upto - at) * q ** -k for k in range(0, n)]
    return math.fsum(f(pts[k]) * (g(pts[k - 1]) - g(pts[k])) for k in range(1, n))


# examples --------------------------------------------------------------------

def test_classical_identity():
    r = rs_integral(TimeScale.interval(0, 1), ID, ID, tol=1e-8)
    assert abs(r.value - 0.5) <= 1e-8 and r.converged
    assert r.lower <= 0.5 <= r.upper


def test_classical_t_dt2():
    r = rs_integral(TimeScale.interval(0, 1), ID, parse("t^2"), tol=1e-8)
    assert abs(r.value - 2 / 3) <= 1e-8


def test_discrete_finite_sum():
    r = rs_integral(TimeScale.points([0, 1, 2, 3]), parse("t^2"), ID)
    assert r.value == 5 and r.gap == 0


def test_q_scale_series():
    r = rs_integral(Q2, ID, parse("t^2"), tol=1e-10)
    assert abs(r.value - 3 / 7) <= 1e-10
    assert 0 < r.tail_bound <= 1e-10
    assert abs(q_series(2.0, lambda t: t, lambda t: t * t) - 3 / 7) <= 1e-15


def test_transition_examples():
    r = rs_integral_via_transition(TimeScale.interval(0, 1), ID, parse("t^2"))
    assert abs(r.value - 2 / 3) <= 1e-8
    r = rs_integral_via_transition(TimeScale.integers(0, 3), parse("1"), parse("t^2"))
    assert r.value == pytest.approx(9, abs=1e-12)


def test_cumulative_examples():
    F = cumulative(TimeScale.integers(0, 3), parse("1"), ID, 0, 3)
    assert F(0).value == 0 and F(2).value == 2


def test_darboux_examples():
    T = TimeScale.points([0, 1, 2])
    assert darboux_bounds(T, ID, ID, Partition(T, (0, 1, 2))) == (1, 1)
    U = TimeScale.interval(0, 1)
    L, H = darboux_bounds(U, ID, ID, Partition(U, (0, 0.5, 1)))
    assert L == pytest.approx(0.25, abs=1e-15) and H == pytest.approx(0.75, abs=1e-15)
    L, H = darboux_bounds(U, parse("3"), parse("t^2"), Partition(U, (0, 0.3, 1)))
    assert L == pytest.approx(3, abs=1e-14) and H == pytest.approx(3, abs=1e-14)


def test_rs_sum_examples():
    T = TimeScale.points([0, 1, 2, 3])
    P = Partition(T, (0, 1, 2, 3))
    assert rs_sum(T, parse("t^2"), ID, P, (0, 1, 2)).value == 5
    assert rs_sum(T, parse("t^2"), parse("4"), P, (0, 1, 2)).value == 0
    assert rs_sum(T, parse("1"), parse("t^3"), P, (0, 1, 2)).value == 27
    with pytest.raises(SelectionOutOfCell):
        rs_sum(T, ID, ID, P, (1, 1, 2))


def test_linearity_examples():
    T = TimeScale.points([0, 1, 2])
    rep = linearity_check(T, ID, ID, 0, 2, 2, 3)
    assert rep["lhs"] == 6 and rep["rhs"] == 6 and rep["passed"]
    assert linearity_check(T, ID, ID, 0, 2, 1, 0)["lhs"] == 0
    with pytest.raises(ValueError):
        linearity_check(T, ID, ID, 0, 2, 1, -1)


def test_errors():
    T = TimeScale.interval(0, 1)
    with pytest.raises(EndpointNotInScale):
        rs_integral(parse_scale("union(interval(0,1),point(2))"), ID, ID, 0, 1.5)
    with pytest.raises(NonMonotoneIntegrator):
        rs_integral(T, ID, parse("0-t"))
    with pytest.raises(ValueError):
        rs_integral(T, ID, ID, 1, 0)
    assert rs_integral(T, ID, ID, 0.5, 0.5).value == 0


def test_budget_exhaustion(monkeypatch):
    monkeypatch.setenv("TSINT_MAX_CELLS", "20")
    with pytest.raises(NoConvergence) as err:
        rs_integral(TimeScale.interval(0, 1), parse("sqrt(t)"), ID, tol=1e-13)
    assert not err.value.result.converged
    r = rs_integral(TimeScale.interval(0, 1), parse("sqrt(t)"), ID, tol=1e-13, strict=False)
    assert r.lower <= 2 / 3 <= r.upper


@pytest.mark.parametrize("src,g,exact", [
    ("exp(t)", "t", math.e - 1),
    ("abs(t - 0.3)", "t", (0.3 ** 2 + 0.7 ** 2) / 2),
    ("sqrt(t)", "t", 2 / 3),
    ("t", "exp(t)", 1.0),
    ("1", "abs(t - 0.5) + 2*t", 2.0),
])
def test_classical_closed_forms(src, g, exact):
    r = rs_integral(TimeScale.interval(0, 1), parse(src), parse(g), tol=1e-9)
    assert abs(r.value - exact) <= 1e-9
    assert r.lower - 1e-15 <= exact <= r.upper + 1e-15


def test_classical_limit_matches_quadrature():
    # Gauss–Legendre on [0, 2] for ∫ f g' dt with smooth f, g
    f, g = parse("exp(0.5*t) + t^2"), parse("t + 0.3*t^3")
    x, w = np.polynomial.legendre.leggauss(60)
    t = 1 + x
    ref = math.fsum(w * f(t) * (1 + 0.9 * t ** 2))
    r = rs_integral(TimeScale.interval(0, 2), f, g, tol=1e-8)
    assert abs(r.value - ref) <= 10 * 1e-8


# properties ------------------------------------------------------------------

scale_seeds = st.integers(0, 100_000)


def _instance(seed, kind="mixed"):
    rng = np.random.default_rng(seed)
    T = parse_scale(random_scale(rng, kind, 3))
    return T, parse(continuous_expr(rng)), parse(integrator_expr(rng)), rng


@settings(max_examples=40, deadline=None)
@given(scale_seeds)
def test_unit_integrand_telescopes(seed):
    T, _, g, _ = _instance(seed)
    r = rs_integral(T, parse("1"), g, tol=1e-10)
    assert abs(r.value - (g(T.max) - g(T.min))) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(scale_seeds)
def test_constant_integrator_is_zero(seed):
    T, f, _, _ = _instance(seed)
    assert rs_integral(T, f, parse("2.5"), tol=1e-10).value == 0


@settings(max_examples=40, deadline=None)
@given(scale_seeds)
def test_single_step_identity(seed):
    T, f, g, rng = _instance(seed)
    for t in T.random_points(rng, 10):
        s = T.sigma(t)
        if s > t:
            r = rs_integral(T, f, g, t, s)
            assert r.value == pytest.approx(f(t) * (g(s) - g(t)), rel=1e-14, abs=1e-300)
            assert r.gap == 0


@settings(max_examples=40, deadline=None)
@given(scale_seeds)
def test_discrete_exactness(seed):
    rng = np.random.default_rng(seed)
    T = parse_scale(random_scale(rng, "discrete", 4))
    f, g = parse(continuous_expr(rng)), parse(integrator_expr(rng))
    pts = T.grid_points(T.min, T.max, T.max - T.min + 1)
    assert len(pts) <= 64
    r = rs_integral(T, f, g)
    ref = finite_sum(list(pts), f, g)
    assert r.gap == 0
    assert abs(r.value - ref) <= 1e-14 * max(1.0, abs(ref), finite_sum(list(pts), lambda t: abs(f(t)), g))


@settings(max_examples=25, deadline=None)
@given(scale_seeds)
def test_additivity(seed):
    T, f, g, rng = _instance(seed)
    c = float(T.random_points(rng, 1)[0])
    whole = rs_integral(T, f, g, tol=1e-9)
    left = rs_integral(T, f, g, T.min, c, tol=1e-9) if c > T.min else None
    right = rs_integral(T, f, g, c, T.max, tol=1e-9) if c < T.max else None
    parts = sum(r.value for r in (left, right) if r is not None)
    assert abs(whole.value - parts) <= 3e-9


@settings(max_examples=25, deadline=None)
@given(scale_seeds)
def test_transition_agrees(seed):
    rng = np.random.default_rng(seed)
    T = parse_scale(random_scale(rng, "mixed", 3))
    f = parse(f"{rng.uniform(-1, 1):.3f} + {rng.uniform(-2, 2):.3f}*t + {rng.uniform(-1, 1):.3f}*t^2")
    g = parse(f"t + {rng.uniform(0, 1):.3f}*t^2")
    a = rs_integral(T, f, g, tol=1e-8)
    b = rs_integral_via_transition(T, f, g, tol=1e-8)
    assert abs(a.value - b.value) <= 5e-8


@settings(max_examples=25, deadline=None)
@given(scale_seeds)
def test_cumulative_monotone_for_nonnegative_f(seed):
    T, f, g, rng = _instance(seed)
    f = parse(f"abs({f.source})")
    F = cumulative(T, f, g, T.min, T.max)
    grid = np.sort(np.concatenate([T.grid_points(T.min, T.max, (T.max - T.min) / 8), T.random_points(rng, 8)]))
    vals = [r.value for r in F.on_grid(grid)]
    assert all(b - a >= -2e-8 for a, b in zip(vals, vals[1:]))
    assert F(T.min).value == 0


def _select(T, rng, u, v):
    """A random tag in ``[u, v)_T``."""
    if rng.random() < 0.3:
        return u
    x = float(T.random_points(rng, 1, u, v)[0])
    return u if x >= v else x


@settings(max_examples=40, deadline=None)
@given(scale_seeds)
def test_refinement_monotone_and_sandwich(seed):
    T, f, g, rng = _instance(seed)
    P = Partition(T, (T.min, T.max)).refine(T.random_points(rng, 3))
    L0, U0 = darboux_bounds(T, f, g, P)
    for _ in range(3):
        P2 = P.refine(T.random_points(rng, 4))
        L1, U1 = darboux_bounds(T, f, g, P2)
        assert L1 >= L0 - 1e-12 * max(1.0, abs(L0)) and U1 <= U0 + 1e-12 * max(1.0, abs(U0))
        X = [_select(T, rng, u, v) for u, v in P2.cells()]
        S = rs_sum(T, f, g, P2, X).value
        assert L1 - 1e-12 * max(1.0, abs(L1)) <= S <= U1 + 1e-12 * max(1.0, abs(U1))
        P, L0, U0 = P2, L1, U1


def test_deterministic_bits():
    T = parse_scale("union(interval(0,1),points(1.5,2),qtail(q=3,at=2.5,upto=3))")
    f, g = parse("exp(t) - t^2"), parse("t + 0.1*t^3")
    a = rs_integral(T, f, g, tol=1e-9)
    b = rs_integral(T, f, g, tol=1e-9)
    assert a == b
