import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import discrete_points
from tsint import convex_catalog, parse, parse_scale, rs_integral
from tsint.errors import DomainError, OrderingViolated, PreconditionViolated
from tsint.fuzz import FuzzConfig, generate
from tsint.inequalities import (
    INEQUALITIES,
    CheckReport,
    InstanceSpec,
    canonical_id,
    check_chebyshev,
    check_chebyshev_kernel,
    check_jensen,
    check_majorisation_eq,
    check_majorisation_le,
    check_monotone_cumulative,
    check_positivity,
    check_reverse_jensen,
    check_subdifferential,
    check_theorem5,
    check_winckler,
    run_check,
)

Z3 = "integers(0,3)"
R01 = "interval(0,1)"


# closed-form anchors -----------------------------------------------------------

def test_positivity_examples():
    assert check_positivity(InstanceSpec(scale=R01, f="0")).margin == 0
    assert check_positivity(InstanceSpec(scale=Z3, f="t^2")).margin == 5
    with pytest.raises(PreconditionViolated) as err:
        check_positivity(InstanceSpec(scale="interval(0,2)", f="t-1"))
    assert err.value.witness < 1


def test_monotone_examples():
    rep = check_monotone_cumulative(InstanceSpec(scale="integers(0,4)", f="t"))
    assert rep.details["cumulative"] == [0, 0, 1, 3, 6] and rep.passed
    rep = check_monotone_cumulative(InstanceSpec(scale=R01, f="1"))
    assert rep.margin >= 0
    assert all(abs(F - t) <= 1e-12 for F, t in zip(rep.details["cumulative"], rep.details["grid"]))
    rep = check_monotone_cumulative(InstanceSpec(scale=R01, f="0"))
    assert rep.margin == 0 and set(rep.details["cumulative"]) == {0}


def test_subdifferential_example():
    rep = check_subdifferential(InstanceSpec(scale=R01, F="abs", samples=2000, seed=5))
    assert rep.passed


def test_theorem5_examples():
    assert check_theorem5(InstanceSpec(scale=R01, x="t", y="t", F="exp")).margin == 0
    rep = check_theorem5(InstanceSpec(scale=Z3, x="t", y="t/2", F="square"))
    # ∫p(x-y)^2 = Σ (t/2)^2 over t = 0, 1, 2
    assert rep.margin == pytest.approx(1.25, abs=1e-12)


def test_jensen_examples():
    rep = check_jensen(InstanceSpec(scale=Z3, x="t", F="square"))
    assert abs(rep.margin - 2 / 3) <= 1e-9
    assert abs(check_jensen(InstanceSpec(scale=R01, x="t", F="exp")).margin - ((math.e - 1) - math.exp(0.5))) <= 1e-9
    assert abs(check_jensen(InstanceSpec(scale=R01, x="0.7", F="exp")).margin) <= 1e-12


def test_reverse_jensen_examples():
    rep = check_reverse_jensen(InstanceSpec(scale=Z3, y="t", F="square"))
    assert rep.details["m1"] == pytest.approx(2 / 3, abs=1e-12)
    assert rep.details["upper_bound"] == pytest.approx(4 / 3, abs=1e-12)
    assert rep.details["m2"] == pytest.approx(2 / 3, abs=1e-12)
    rep = check_reverse_jensen(InstanceSpec(scale=R01, y="2", F="exp"))
    assert abs(rep.details["m1"]) <= 1e-12 and abs(rep.details["upper_bound"]) <= 1e-12


def test_chebyshev_examples():
    assert check_chebyshev(InstanceSpec(scale=Z3, f1="t", f2="t")).margin == 6
    assert check_chebyshev(InstanceSpec(scale=R01, f1="2", f2="exp(t)")).margin == pytest.approx(0, abs=1e-12)
    rep = check_chebyshev_kernel(InstanceSpec(scale=Z3, f1="t", f2="0-t", order="opposite"))
    assert rep.details["kernel_integral"] == -12 and rep.margin == 12
    assert check_chebyshev_kernel(InstanceSpec(scale=R01, f1="t", f2="3")).margin == 0


def test_chebyshev_misordered():
    with pytest.raises(OrderingViolated):
        check_chebyshev(InstanceSpec(scale=Z3, f1="t", f2="0-t", order="similar"))
    with pytest.raises(OrderingViolated):
        check_chebyshev_kernel(InstanceSpec(scale=R01, f1="t", f2="t^2", order="opposite"))


def test_winckler_examples():
    assert abs(check_winckler(InstanceSpec(scale=R01, f="2.5")).margin) <= 1e-12
    rep = check_winckler(InstanceSpec(scale=R01, f="exp(t)"))
    assert abs(rep.margin - ((math.e - 1) * (1 - 1 / math.e) - 1)) <= 1e-9
    assert rep.details["printed_orientation_margin"] == pytest.approx(-rep.margin)
    with pytest.raises(DomainError):
        check_winckler(InstanceSpec(scale=R01, f="t"))
    with pytest.raises(PreconditionViolated):
        check_winckler(InstanceSpec(scale="interval(0,2)", f="t - 0.503"))


def test_majorisation_examples():
    assert check_majorisation_eq(InstanceSpec(scale=R01, x="t", y="t", F="square")).margin == 0
    rep = check_majorisation_eq(InstanceSpec(scale=R01, x="2*t - 0.5", y="t", F="square"))
    assert abs(rep.margin - 0.25) <= 1e-8
    # ℤ ∩ [0,4], y = t, x = y + (t - 1.5) so that Σ_{t<4} x = Σ_{t<4} y
    rep = check_majorisation_eq(InstanceSpec(scale="integers(0,4)", x="2*t - 1.5", y="t", F="abs"))
    assert rep.margin == pytest.approx(sum(abs(2 * t - 1.5) - t for t in range(4)), abs=1e-12)
    with pytest.raises(PreconditionViolated):
        check_majorisation_eq(InstanceSpec(scale=R01, x="t + 1", y="t", F="square"))


def test_majorisation_le_examples():
    assert check_majorisation_le(InstanceSpec(scale=R01, x="t + 0.3", y="t", F="exp")).margin > 0
    assert check_majorisation_le(InstanceSpec(scale=R01, x="t", y="t", F="exp")).margin == 0
    rep = check_majorisation_le(InstanceSpec(scale=Z3, x="t + 1", y="t", F="exp"))
    assert rep.margin == pytest.approx((math.e - 1) * sum(math.exp(t) for t in range(3)), rel=1e-14)
    with pytest.raises(PreconditionViolated):
        check_majorisation_le(InstanceSpec(scale=R01, x="t + 1", y="t", F="square"))
    with pytest.raises(PreconditionViolated):
        check_majorisation_le(InstanceSpec(scale=R01, x="t - 1", y="t", F="exp"))


def test_negative_weight_rejected():
    with pytest.raises(PreconditionViolated):
        check_jensen(InstanceSpec(scale=R01, x="t", F="square", p="t - 0.5"))


def test_nonmonotone_integrator_is_precondition():
    with pytest.raises(PreconditionViolated):
        check_jensen(InstanceSpec(scale=R01, x="t", F="square", g="0-t"))


def test_ids_and_serialisation():
    assert set(INEQUALITIES) >= {"jensen", "theorem5", "majorisation-eq", "majorisation-le", "winckler"}
    assert canonical_id("Majorisation_Eq") == "majorisation-eq"
    spec = InstanceSpec(scale=Z3, x="t", F="square")
    assert InstanceSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        InstanceSpec.from_dict({"scale": Z3, "bogus": 1})
    rep = run_check("jensen", spec)
    assert isinstance(rep, CheckReport) and rep.to_json() == run_check("jensen", spec).to_json()


# brute-force oracles on discrete scales ------------------------------------------

def _sums(spec: InstanceSpec):
    """``w(h) = Σ p(t_i) h(t_i) (g(t_{i+1}) - g(t_i))`` by scalar evaluation."""
    T = parse_scale(spec.scale)
    pts = discrete_points(T)
    p, g = parse(spec.p), parse(spec.g)
    weights = [p(a) * (g(b) - g(a)) for a, b in zip(pts, pts[1:])]

    def w(h):
        return math.fsum(wi * h(a) for wi, a in zip(weights, pts))

    return w


def brute_margin(iid: str, spec: InstanceSpec) -> float:
    w = _sums(spec)
    ex = {k: parse(getattr(spec, k)) for k in ("x", "y", "f", "f1", "f2") if getattr(spec, k)}
    C = convex_catalog(spec.F) if spec.F else None
    if iid == "theorem5":
        x, y = ex["x"], ex["y"]
        lhs = w(lambda t: C.F(x(t))) - w(lambda t: C.F(y(t)))
        rhs = w(lambda t: x(t) * C.phi(y(t))) - w(lambda t: y(t) * C.phi(y(t)))
        return lhs - rhs
    if iid == "jensen":
        A = w(lambda t: 1.0)
        return w(lambda t: C.F(ex["x"](t))) / A - C.F(w(ex["x"]) / A)
    if iid == "chebyshev":
        f1, f2 = ex["f1"], ex["f2"]
        sign = 1 if (spec.order or "similar") == "similar" else -1
        return sign * (w(lambda t: 1.0) * w(lambda t: f1(t) * f2(t)) - w(f1) * w(f2))
    if iid in ("majorisation-eq", "majorisation-le"):
        return w(lambda t: C.F(ex["x"](t))) - w(lambda t: C.F(ex["y"](t)))
    if iid == "winckler":
        f = ex["f"]
        return w(f) * w(lambda t: 1 / f(t)) - w(lambda t: 1.0) ** 2
    raise KeyError(iid)


DISCRETE = FuzzConfig(scales="discrete")


def admissible(iid: str, rng, cfg: FuzzConfig = FuzzConfig()) -> InstanceSpec:
    """First generated instance that passes the check's preconditions."""
    for _ in range(1000):
        spec = generate(iid, rng, cfg)
        try:
            run_check(iid, spec)
        except (PreconditionViolated, DomainError):
            continue
        return spec
    raise AssertionError("generator exhausted")


@pytest.mark.parametrize("iid", ["theorem5", "jensen", "chebyshev", "majorisation-eq", "majorisation-le", "winckler"])
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_discrete_margin_matches_brute_force(iid, seed):
    spec = admissible(iid, np.random.default_rng([seed, 7]), DISCRETE)
    rep = run_check(iid, spec)
    ref = brute_margin(iid, spec)
    scale = max(1.0, abs(rep.lhs), abs(rep.rhs))
    assert abs(rep.margin - ref) <= 1e-12 * scale


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_kernel_is_twice_chebyshev(seed):
    spec = admissible("chebyshev", np.random.default_rng([seed, 11]))
    k = check_chebyshev_kernel(spec)
    c = check_chebyshev(spec)
    assert abs(k.margin - 2 * c.margin) <= 5 * spec.tol + 2e-9 * max(1.0, abs(k.margin))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_jensen_equality_for_affine_F(seed):
    spec = replace(generate("jensen", np.random.default_rng([seed, 13])), F="power_1")
    try:
        rep = check_jensen(spec)
    except PreconditionViolated:
        return
    assert abs(rep.margin) <= rep.slack


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_theorem5_square_is_weighted_squared_distance(seed):
    spec = replace(admissible("theorem5", np.random.default_rng([seed, 17])), F="square")
    try:
        rep = check_theorem5(spec)
    except PreconditionViolated:
        return
    T = parse_scale(spec.scale)
    direct = rs_integral(T, parse(f"({spec.p})*(({spec.x}) - ({spec.y}))^2"), parse(spec.g), tol=1e-9,
                         rtol=1e-12).value
    assert abs(rep.margin - direct) <= 5 * spec.tol + 1e-9 * max(1.0, abs(direct), abs(rep.lhs))


@pytest.mark.parametrize("lam", [2.0, 10.0])
def test_scaling_covariance(lam):
    for seed in range(8):
        rng = np.random.default_rng([seed, 19])
        for iid, power in (("theorem5", 1), ("chebyshev", 2)):
            spec = admissible(iid, rng)
            scaled = replace(spec, p=f"{lam!r}*({spec.p})")
            m, ms = run_check(iid, spec), run_check(iid, scaled)
            tol = 1e-8 * max(1.0, abs(ms.lhs), abs(ms.rhs))
            assert abs(ms.margin - lam ** power * m.margin) <= tol


def test_replay_determinism():
    spec = admissible("reverse-jensen", np.random.default_rng([3, 3]))
    assert run_check("reverse-jensen", spec).to_json() == run_check("reverse-jensen", spec).to_json()
