"""Numerical checks of the Δ-integral inequalities with signed margins.

Every check evaluates ``lhs`` and ``rhs`` from certified integral enclosures,
reports ``margin`` (oriented so that ``margin >= 0`` means the inequality
holds) and a ``slack`` made of a relative floor plus the propagated
integration error. Preconditions are validated first and reported as
:class:`PreconditionViolated`, never as a failed inequality.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Callable

import numpy as np

from .convex import ConvexFn, check_subgradient, convex_catalog
from .errors import (
    DomainError,
    NonMonotoneIntegrator,
    OrderingViolated,
    PreconditionViolated,
)
from .expr import ExprFn, parse
from .integration import IntegralResult, rs_double_integral, rs_integral
from .scalespec import format_scale, parse_scale
from .timescale import TimeScale

__all__ = [
    "INEQUALITIES", "CheckReport", "InstanceSpec", "run_check", "check_positivity",
    "check_monotone_cumulative", "check_subdifferential", "check_theorem5", "check_jensen",
    "check_reverse_jensen", "check_chebyshev_kernel", "check_chebyshev", "check_winckler",
    "check_majorisation_eq", "check_majorisation_le",
]

REL_SLACK = 1e-9
# integrals inside checks aim well below the relative slack floor
INTEGRAL_RTOL = 1e-10
SIGN_SLACK = 1e-12


@dataclass(frozen=True)
class InstanceSpec:
    """Serializable inputs of one check. Expressions are kept as source text."""

    scale: str
    a: float | None = None
    b: float | None = None
    g: str = "t"
    p: str = "1"
    f: str | None = None
    x: str | None = None
    y: str | None = None
    f1: str | None = None
    f2: str | None = None
    F: str | None = None
    selection: str = "mid"
    order: str | None = None
    tol: float = 1e-8
    seed: int = 0
    samples: int = 1000
    signed_p: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "InstanceSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown instance fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class CheckReport:
    inequality_id: str
    lhs: float
    rhs: float
    margin: float
    slack: float
    passed: bool
    instance: dict[str, Any]
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# enclosure arithmetic --------------------------------------------------------

@dataclass(frozen=True)
class _V:
    """A computed quantity with an enclosure ``[lo, hi]``."""

    v: float
    lo: float
    hi: float

    @staticmethod
    def exact(v: float) -> "_V":
        return _V(v, v, v)

    @staticmethod
    def of(r: IntegralResult) -> "_V":
        return _V(r.value, min(r.lower, r.value) - r.tail_bound, max(r.upper, r.value) + r.tail_bound)

    @property
    def err(self) -> float:
        return max(self.hi - self.v, self.v - self.lo, 0.0)

    def __add__(self, o: "_V") -> "_V":
        return _V(self.v + o.v, self.lo + o.lo, self.hi + o.hi)

    def __sub__(self, o: "_V") -> "_V":
        return _V(self.v - o.v, self.lo - o.hi, self.hi - o.lo)

    def __mul__(self, o: "_V") -> "_V":
        c = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return _V(self.v * o.v, min(c), max(c))

    def __truediv__(self, o: "_V") -> "_V":
        if o.lo <= 0.0 <= o.hi:
            raise PreconditionViolated("division by a quantity that may vanish", None, o.v)
        return self * _V(1.0 / o.v, 1.0 / o.hi, 1.0 / o.lo)

    def apply(self, F: ExprFn) -> "_V":
        lo, hi = F.bounds(self.lo, self.hi)
        return _V(float(F(self.v)), float(lo), float(hi))


def _report(iid: str, lhs: _V, rhs: _V, spec: InstanceSpec, details: dict | None = None,
            margin: _V | None = None) -> CheckReport:
    m = lhs - rhs if margin is None else margin
    slack = REL_SLACK * max(1.0, abs(lhs.v), abs(rhs.v)) + m.err
    return CheckReport(iid, lhs.v, rhs.v, m.v, slack, bool(m.v >= -slack), spec.to_dict(), details or {})


# context ---------------------------------------------------------------------

class _Ctx:
    def __init__(self, spec: InstanceSpec):
        self.spec = spec
        self.T: TimeScale = parse_scale(spec.scale)
        self.a = self.T.min if spec.a is None else self.T.snap(spec.a)
        self.b = self.T.max if spec.b is None else self.T.snap(spec.b)
        if not self.a < self.b:
            raise PreconditionViolated(f"need a < b, got [{self.a}, {self.b}]", (self.a, self.b), self.a - self.b)
        self.g = parse(spec.g)
        self.p = parse(spec.p)
        self.tol = spec.tol
        self._grid: np.ndarray | None = None
        self._cache: dict[str, IntegralResult] = {}

    def expr(self, name: str) -> ExprFn:
        src = getattr(self.spec, name)
        if src is None:
            raise ValueError(f"this check needs --{name}")
        return parse(src)

    def convex(self) -> ConvexFn:
        if self.spec.F is None:
            raise ValueError("this check needs --F")
        return convex_catalog(self.spec.F, self.spec.selection)

    @property
    def grid(self) -> np.ndarray:
        """Every scattered point, dense stretches at mesh (b-a)/64, plus 64 random points."""
        if self._grid is None:
            base = self.T.grid_points(self.a, self.b, (self.b - self.a) / 64)
            rng = np.random.default_rng([self.spec.seed, 0x5EED])
            extra = self.T.random_points(rng, 64, self.a, self.b)
            self._grid = np.unique(np.concatenate([base, extra]))
        return self._grid

    def integral(self, f: ExprFn) -> _V:
        key = f.source
        if key not in self._cache:
            try:
                self._cache[key] = rs_integral(self.T, f, self.g, self.a, self.b, self.tol,
                                                rtol=INTEGRAL_RTOL)
            except NonMonotoneIntegrator as exc:
                raise PreconditionViolated(f"integrator g is not non-decreasing: {exc}", exc.witness,
                                           None) from None
            except DomainError as exc:
                raise PreconditionViolated(f"integrand not defined on the scale: {exc}", None, None) from None
        return _V.of(self._cache[key])

    def weighted(self, h: ExprFn) -> _V:
        """``∫ p h Δg``."""
        return self.integral(self.p * h)

    def values(self, f: ExprFn, where: np.ndarray | None = None) -> np.ndarray:
        pts = self.grid if where is None else where
        try:
            return np.asarray(f(pts), dtype=float) * np.ones_like(pts)
        except DomainError as exc:
            raise PreconditionViolated(f"{f.source} is not defined on the scale: {exc}", None, None) from None

    # preconditions

    def require_nonnegative(self, f: ExprFn, what: str) -> None:
        vals = self.values(f)
        i = int(np.argmin(vals))
        if vals[i] < -SIGN_SLACK:
            raise PreconditionViolated(f"{what} is negative at t={float(self.grid[i])!r}", float(self.grid[i]),
                                       float(vals[i]))

    def require_weights(self) -> None:
        if not self.spec.signed_p:
            self.require_nonnegative(self.p, "p")
        self.require_integrator()

    def require_integrator(self) -> None:
        vals = self.values(self.g)
        steps = np.diff(vals)
        if steps.size and steps.min() < -1e-12:
            i = int(np.argmin(steps))
            raise PreconditionViolated(f"g decreases between t={float(self.grid[i])!r} and t={float(self.grid[i + 1])!r}",
                                       (float(self.grid[i]), float(self.grid[i + 1])), float(steps[i]))

    def require_in_domain(self, C: ConvexFn, h: ExprFn, name: str) -> None:
        vals = self.values(h)
        bad = ~C.contains(vals)
        if bad.any():
            i = int(np.argmax(bad))
            raise PreconditionViolated(f"{name}(t) leaves the domain of {C.name} at t={float(self.grid[i])!r}",
                                       float(self.grid[i]), float(vals[i]))

    def direction(self, h: ExprFn, name: str) -> int:
        """+1 non-decreasing, -1 non-increasing, 0 constant on the grid."""
        steps = np.diff(self.values(h))
        scale = 1e-12 * max(1.0, float(np.max(np.abs(self.values(h)))))
        up = bool(np.all(steps >= -scale))
        down = bool(np.all(steps <= scale))
        if up and down:
            return 0
        if up:
            return 1
        if down:
            return -1
        i = int(np.argmin(steps)) if steps.min() < -scale else int(np.argmax(steps))
        raise PreconditionViolated(f"{name} is not monotone near t={float(self.grid[i])!r}",
                                   (float(self.grid[i]), float(self.grid[i + 1])), float(steps[i]))


def _positive_total(ctx: _Ctx) -> _V:
    A = ctx.integral(ctx.p)
    if not A.lo > 0:
        raise PreconditionViolated(f"A = ∫p Δg must be positive, got {A.v!r}", None, A.v)
    return A


def _ordering(ctx: _Ctx, f1: ExprFn, f2: ExprFn, order: str) -> int:
    if order not in ("similar", "opposite"):
        raise ValueError("order must be 'similar' or 'opposite'")
    sign = 1 if order == "similar" else -1
    v1, v2 = ctx.values(f1), ctx.values(f2)
    prod = (v1[:, None] - v1[None, :]) * (v2[:, None] - v2[None, :]) * sign
    floor = 1e-12 * max(1.0, float(np.max(np.abs(v1))) * float(np.max(np.abs(v2))))
    i, j = np.unravel_index(int(np.argmin(prod)), prod.shape)
    if prod[i, j] < -floor:
        raise OrderingViolated(f"f1, f2 are not {order}ly ordered at t={float(ctx.grid[i])!r}, s={float(ctx.grid[j])!r}",
                               (float(ctx.grid[i]), float(ctx.grid[j])), float(prod[i, j]))
    return sign


# checks ----------------------------------------------------------------------

def check_positivity(spec: InstanceSpec) -> CheckReport:
    """``f >= 0`` implies ``∫ f Δg >= 0``."""
    ctx = _Ctx(spec)
    f = ctx.expr("f")
    ctx.require_integrator()
    ctx.require_nonnegative(f, "f")
    return _report("positivity", ctx.integral(f), _V.exact(0.0), spec)


def check_monotone_cumulative(spec: InstanceSpec) -> CheckReport:
    """``t ↦ ∫_a^t f Δg`` is non-decreasing when ``f >= 0``: worst pair on the grid."""
    ctx = _Ctx(spec)
    f = ctx.expr("f")
    ctx.require_integrator()
    ctx.require_nonnegative(f, "f")
    nodes = ctx.T.grid_points(ctx.a, ctx.b, (ctx.b - ctx.a) / 32)
    pieces = [_V.exact(0.0)]
    for lo, hi in zip(nodes, nodes[1:]):
        r = rs_integral(ctx.T, f, ctx.g, float(lo), float(hi), ctx.tol / max(1, len(nodes) - 1),
                        rtol=INTEGRAL_RTOL)
        pieces.append(pieces[-1] + _V.of(r))
    best: tuple[float, int, int] | None = None
    running = 0
    for j in range(1, len(pieces)):
        if pieces[j - 1].v > pieces[running].v:
            running = j - 1
        d = pieces[j].v - pieces[running].v
        if best is None or d < best[0]:
            best = (d, running, j)
    _, i, j = best
    return _report("monotone", pieces[j], pieces[i], spec,
                   {"t1": float(nodes[i]), "t2": float(nodes[j]),
                    "cumulative": [float(p.v) for p in pieces], "grid": [float(t) for t in nodes]})


def check_subdifferential(spec: InstanceSpec) -> CheckReport:
    """``F(x) >= F(y) + (x - y) φ(y)`` at random pairs of the catalog function's domain."""
    C = convex_catalog(spec.F or "", spec.selection)
    res = check_subgradient(C, spec.samples, spec.seed)
    m = res["min_margin"]
    return CheckReport("subdifferential", m, 0.0, m, SIGN_SLACK, bool(m >= -SIGN_SLACK), spec.to_dict(),
                       {"witness": res["witness"]})


def check_theorem5(spec: InstanceSpec) -> CheckReport:
    """``∫pF(x) - ∫pF(y) >= ∫p x φ(y) - ∫p y φ(y)``."""
    ctx = _Ctx(spec)
    C, x, y = ctx.convex(), ctx.expr("x"), ctx.expr("y")
    ctx.require_weights()
    ctx.require_in_domain(C, x, "x")
    ctx.require_in_domain(C, y, "y")
    phi_y = C.phi.compose(y)
    lhs = ctx.weighted(C.F.compose(x)) - ctx.weighted(C.F.compose(y))
    rhs = ctx.weighted(x * phi_y) - ctx.weighted(y * phi_y)
    return _report("theorem5", lhs, rhs, spec)


def check_jensen(spec: InstanceSpec) -> CheckReport:
    """``(1/A)∫pF(x) >= F((1/A)∫p x)`` with ``A = ∫p > 0``."""
    ctx = _Ctx(spec)
    C, x = ctx.convex(), ctx.expr("x")
    ctx.require_weights()
    ctx.require_in_domain(C, x, "x")
    A = _positive_total(ctx)
    mean = ctx.weighted(x) / A
    lhs = ctx.weighted(C.F.compose(x)) / A
    rhs = mean.apply(C.F)
    return _report("jensen", lhs, rhs, spec, {"A": A.v, "mean": mean.v})


def check_reverse_jensen(spec: InstanceSpec) -> CheckReport:
    """Both sides of ``0 <= m1 <= (1/A)[∫p y φ(y) - (1/A)∫p y ∫p φ(y)]``; reports the tighter."""
    ctx = _Ctx(spec)
    C, y = ctx.convex(), ctx.expr("y")
    ctx.require_weights()
    ctx.require_in_domain(C, y, "y")
    A = _positive_total(ctx)
    phi_y = C.phi.compose(y)
    mean = ctx.weighted(y) / A
    avg_F = ctx.weighted(C.F.compose(y)) / A
    F_mean = mean.apply(C.F)
    m1 = avg_F - F_mean
    upper = (ctx.weighted(y * phi_y) - ctx.weighted(y) * ctx.weighted(phi_y) / A) / A
    m2 = upper - m1
    details = {"A": A.v, "m1": m1.v, "m2": m2.v, "upper_bound": upper.v}
    if m1.v <= m2.v:
        return _report("reverse-jensen", avg_F, F_mean, spec, details | {"binding": "m1"})
    return _report("reverse-jensen", upper, m1, spec, details | {"binding": "m2"})


def _kernel(p: ExprFn, f1: ExprFn, f2: ExprFn) -> ExprFn:
    pt, ps = p.as_bivariate(), p.in_s()
    return pt * ps * (f1.as_bivariate() - f1.in_s()) * (f2.as_bivariate() - f2.in_s())


def check_chebyshev_kernel(spec: InstanceSpec) -> CheckReport:
    """``sign · ∬ p(t)p(s)(f1(t)-f1(s))(f2(t)-f2(s)) Δg Δg >= 0``."""
    ctx = _Ctx(spec)
    f1, f2 = ctx.expr("f1"), ctx.expr("f2")
    ctx.require_weights()
    sign = _ordering(ctx, f1, f2, spec.order or "similar")
    try:
        r = rs_double_integral(ctx.T, ctx.T, _kernel(ctx.p, f1, f2), ctx.g, ctx.g,
                               (ctx.a, ctx.b, ctx.a, ctx.b), ctx.tol, rtol=INTEGRAL_RTOL)
    except NonMonotoneIntegrator as exc:
        raise PreconditionViolated(f"integrator g is not non-decreasing: {exc}", exc.witness, None) from None
    k = _V.of(r)
    lhs = k if sign > 0 else _V.exact(0.0) - k
    return _report("chebyshev-kernel", lhs, _V.exact(0.0), spec, {"kernel_integral": r.value, "sign": sign})


def check_chebyshev(spec: InstanceSpec) -> CheckReport:
    """``sign · (∫p ∫p f1 f2 - ∫p f1 ∫p f2) >= 0``."""
    ctx = _Ctx(spec)
    f1, f2 = ctx.expr("f1"), ctx.expr("f2")
    ctx.require_weights()
    sign = _ordering(ctx, f1, f2, spec.order or "similar")
    both = ctx.integral(ctx.p) * ctx.weighted(f1 * f2)
    split = ctx.weighted(f1) * ctx.weighted(f2)
    lhs, rhs = (both, split) if sign > 0 else (split, both)
    return _report("chebyshev", lhs, rhs, spec, {"sign": sign})


def check_winckler(spec: InstanceSpec) -> CheckReport:
    """``∫p f · ∫(p/f) >= (∫p)²`` for ``f`` of constant sign.

    ``details["printed_orientation_margin"]`` holds ``(∫p)² - ∫pf ∫(p/f)``,
    the reverse orientation, for reference.
    """
    ctx = _Ctx(spec)
    f = ctx.expr("f")
    ctx.require_weights()
    vals = ctx.values(f)
    i = int(np.argmin(np.abs(vals)))
    if abs(vals[i]) <= 1e-12:
        raise DomainError(f"f vanishes near t={float(ctx.grid[i])!r}, so 1/f is not available")
    if vals.min() < 0 < vals.max():
        raise PreconditionViolated("f changes sign, so f and 1/f are not oppositely ordered",
                                   float(ctx.grid[int(np.argmin(vals))]), float(vals.min()))
    lhs = ctx.weighted(f) * ctx.integral(ctx.p / f)
    A = ctx.integral(ctx.p)
    rhs = A * A
    return _report("winckler", lhs, rhs, spec, {"printed_orientation_margin": rhs.v - lhs.v})


def _majorisation_common(ctx: _Ctx) -> tuple[ConvexFn, ExprFn, ExprFn, _V, _V, dict]:
    C, x, y = ctx.convex(), ctx.expr("x"), ctx.expr("y")
    ctx.require_weights()
    dy = ctx.direction(y, "y")
    dd = ctx.direction(x - y, "x - y")
    if dy * dd < 0:
        raise PreconditionViolated("y and x - y are monotone in opposite directions", None, None)
    ctx.require_in_domain(C, x, "x")
    ctx.require_in_domain(C, y, "y")
    return C, x, y, ctx.weighted(x), ctx.weighted(y), {"direction_y": dy, "direction_x_minus_y": dd}


def check_majorisation_eq(spec: InstanceSpec) -> CheckReport:
    """``∫pF(x) >= ∫pF(y)`` given co-monotone ``y``, ``x - y`` and ``∫p x = ∫p y``."""
    ctx = _Ctx(spec)
    C, x, y, Ix, Iy, details = _majorisation_common(ctx)
    defect = Ix - Iy
    allowed = REL_SLACK * max(1.0, abs(Ix.v), abs(Iy.v)) + defect.err
    if abs(defect.v) > allowed:
        raise PreconditionViolated(f"∫p x Δg and ∫p y Δg differ by {defect.v!r}", None, defect.v)
    details["integral_defect"] = defect.v
    return _report("majorisation-eq", ctx.weighted(C.F.compose(x)), ctx.weighted(C.F.compose(y)), spec, details)


def check_majorisation_le(spec: InstanceSpec) -> CheckReport:
    """As :func:`check_majorisation_eq` with ``∫p y <= ∫p x`` and ``F`` non-decreasing."""
    ctx = _Ctx(spec)
    C = ctx.convex()
    if C.nondecreasing is not True:
        raise PreconditionViolated(f"{C.name} is not flagged non-decreasing", None, None)
    C, x, y, Ix, Iy, details = _majorisation_common(ctx)
    defect = Iy - Ix
    allowed = REL_SLACK * max(1.0, abs(Ix.v), abs(Iy.v)) + defect.err
    if defect.v > allowed:
        raise PreconditionViolated(f"∫p y Δg exceeds ∫p x Δg by {defect.v!r}", None, defect.v)
    details["integral_defect"] = -defect.v
    return _report("majorisation-le", ctx.weighted(C.F.compose(x)), ctx.weighted(C.F.compose(y)), spec, details)


INEQUALITIES: dict[str, Callable[[InstanceSpec], CheckReport]] = {
    "positivity": check_positivity,
    "monotone": check_monotone_cumulative,
    "subdifferential": check_subdifferential,
    "theorem5": check_theorem5,
    "jensen": check_jensen,
    "reverse-jensen": check_reverse_jensen,
    "chebyshev-kernel": check_chebyshev_kernel,
    "chebyshev": check_chebyshev,
    "winckler": check_winckler,
    "majorisation-eq": check_majorisation_eq,
    "majorisation-le": check_majorisation_le,
}


def canonical_id(name: str) -> str:
    key = name.strip().lower().replace("_", "-")
    aliases = {"cebysev": "chebyshev", "majorization-eq": "majorisation-eq",
               "majorization-le": "majorisation-le", "reversejensen": "reverse-jensen"}
    key = aliases.get(key, key)
    if key not in INEQUALITIES:
        raise ValueError(f"unknown inequality {name!r}; choose from {', '.join(INEQUALITIES)}")
    return key


def run_check(inequality_id: str, spec: InstanceSpec) -> CheckReport:
    return INEQUALITIES[canonical_id(inequality_id)](spec)


def normalise_spec(spec: InstanceSpec) -> InstanceSpec:
    """Canonical scale text so that equal instances serialize identically."""
    return replace(spec, scale=format_scale(parse_scale(spec.scale)))


def reports_to_jsonl(reports) -> str:
    return "".join(r.to_json() + "\n" for r in reports)
