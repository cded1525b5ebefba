"""Riemann–Stieltjes Δ-integrals on time scales.

``[a, b)_T`` splits into three kinds of pieces:

* scattered points ``t``, which contribute ``f(t) (g(σ(t)) - g(t))`` exactly;
* q-tails, summed point by point until the remainder
  ``sup|f| * (g(p_K) - g(accumulation))`` is negligible (reported as
  ``tail_bound``);
* dense stretches, refined adaptively by bisection.

On a dense cell the enclosure is the Darboux pair ``[m Δg, M Δg]``, with
``m, M`` from interval arithmetic on the expression (or sampling plus a
Lipschitz pad for plain callables), intersected with a Richardson-corrected
trapezoid estimate ± its error estimate. The result carries the summed lower
and upper bounds, and ``value`` is their midpoint.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import NoConvergence, NonMonotoneIntegrator, SelectionOutOfCell
from .expr import ExprFn, identity
from .timescale import Interval, Partition, Point, QTail, TimeScale, dense_derivative

__all__ = [
    "IntegralResult", "RSSum", "darboux_bounds", "rs_sum", "rs_integral",
    "rs_integral_via_transition", "cumulative", "rs_double_integral",
    "iterated_integral", "linearity_check",
]

MONOTONE_SLACK = 1e-12
DEFAULT_MAX_CELLS = 1_000_000
_NODES = np.linspace(0.0, 1.0, 17)
_NODES_2D = np.linspace(0.0, 1.0, 9)


def max_cells() -> int:
    env = os.environ.get("TSINT_MAX_CELLS")
    return int(float(env)) if env else DEFAULT_MAX_CELLS


@dataclass(frozen=True)
class IntegralResult:
    value: float
    lower: float
    upper: float
    gap: float
    refinements: int
    tail_bound: float
    converged: bool

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def error_bound(self) -> float:
        """Half the Darboux gap plus the tail remainder."""
        return self.gap / 2.0 + self.tail_bound


def _result(lower: float, upper: float, value: float, splits: int, tail: float, ok: bool, tol: float):
    gap = max(upper - lower, 0.0)
    return IntegralResult(value, lower, upper, gap, splits, tail, bool(ok and gap + tail <= tol))


def _zero() -> IntegralResult:
    return IntegralResult(0.0, 0.0, 0.0, 0.0, 0, 0.0, True)


# integrands ------------------------------------------------------------------

class _Integrand:
    """Values (and optionally range enclosures) of ``rows`` functions of one variable."""

    rows = 1

    def values(self, x: np.ndarray) -> np.ndarray:  # (rows,) + x.shape
        raise NotImplementedError

    def bounds(self, lo: np.ndarray, hi: np.ndarray):
        return None

    def atom_values(self, t: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        return self.values(t)

    def on_stretch(self, lo: float, hi: float) -> "_Integrand":
        return self


class _ExprIntegrand(_Integrand):
    def __init__(self, f: ExprFn):
        self.f = f

    def values(self, x):
        return np.asarray(self.f(x), dtype=float).reshape((1,) + np.shape(x))

    def bounds(self, lo, hi):
        blo, bhi = self.f.bounds(lo, hi)
        return blo[None], bhi[None]


class _CallableIntegrand(_Integrand):
    def __init__(self, fn: Callable):
        self.fn = fn

    def values(self, x):
        return np.asarray(self.fn(x), dtype=float).reshape((1,) + np.shape(x))


class _RowsIntegrand(_Integrand):
    """``f(fixed_r, x)`` (free axis ``s``) or ``f(x, fixed_r)`` (free axis ``t``) for each row."""

    def __init__(self, f: ExprFn, fixed: np.ndarray, free: str):
        self.f = f
        self.fixed = np.asarray(fixed, dtype=float)
        self.free = free
        self.rows = len(self.fixed)

    def _fixed(self, ndim):
        return self.fixed.reshape((-1,) + (1,) * ndim)

    def values(self, x):
        x = np.asarray(x, dtype=float)
        c = self._fixed(x.ndim)
        out = self.f(c, x[None]) if self.free == "s" else self.f(x[None], c)
        return np.broadcast_to(np.asarray(out, dtype=float), (self.rows,) + x.shape)

    def bounds(self, lo, hi):
        lo = np.asarray(lo, dtype=float)[None]
        hi = np.asarray(hi, dtype=float)[None]
        c = self._fixed(lo.ndim - 1)
        if self.free == "s":
            return self.f.bounds(c, c, lo, hi)
        return self.f.bounds(lo, hi, c, c)


class _TransitionIntegrand(_Integrand):
    """``f · g^Δ`` for integration against the identity."""

    def __init__(self, f, g, h0_rel: float = 1e-3, lo: float | None = None, hi: float | None = None):
        self.f, self.g, self.h0_rel = f, g, h0_rel
        self.lo, self.hi = lo, hi

    def on_stretch(self, lo, hi):
        return _TransitionIntegrand(self.f, self.g, self.h0_rel, lo, hi)

    def values(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        deriv = dense_derivative(self.g, flat, self.lo, self.hi, self.h0_rel * (self.hi - self.lo))
        out = np.asarray(self.f(flat), dtype=float) * deriv
        return out.reshape((1,) + x.shape)

    def atom_values(self, t, sigma):
        t = np.asarray(t, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        # deep tail points can coincide in floating point; use a forward slope there
        h = np.where(sigma > t, sigma - t, 1.5e-8 * np.maximum(1.0, np.abs(t)))
        upper = np.where(sigma > t, sigma, t + h)
        quotient = (np.asarray(self.g(upper), float) - np.asarray(self.g(t), float)) / (upper - t)
        return (np.asarray(self.f(t), dtype=float) * quotient)[None]


def _as_integrand(f) -> _Integrand:
    if isinstance(f, _Integrand):
        return f
    if isinstance(f, ExprFn):
        return _ExprIntegrand(f)
    return _CallableIntegrand(f)


def _gvals(g, x) -> np.ndarray:
    return np.asarray(g(np.asarray(x, dtype=float)), dtype=float)


def _check_increments(dg: np.ndarray, where) -> np.ndarray:
    if dg.size and np.min(dg) < -MONOTONE_SLACK:
        i = int(np.argmin(dg))
        w = where(i) if callable(where) else where
        raise NonMonotoneIntegrator(f"integrator decreases by {-dg.flat[i]:.3g} near {w}", w)
    return np.maximum(dg, 0.0)


# piece decomposition ---------------------------------------------------------

@dataclass
class _Pieces:
    atoms: np.ndarray
    sigmas: np.ndarray
    stretches: list[tuple[float, float]]
    tails: list[QTail]
    scale: TimeScale


@lru_cache(maxsize=256)
def _pieces(T: TimeScale, a: float, b: float) -> _Pieces:
    S = T.restrict(a, b)
    atoms: list[float] = []
    sigmas: list[float] = []
    stretches: list[tuple[float, float]] = []
    tails: list[QTail] = []
    for blk in S.components:
        if isinstance(blk, Point):
            if blk.value < b:
                atoms.append(blk.value)
                sigmas.append(S.sigma(blk.value))
        elif isinstance(blk, Interval):
            stretches.append((blk.lo, blk.hi))
            if blk.hi < b:
                atoms.append(blk.hi)
                sigmas.append(S.sigma(blk.hi))
        else:
            tails.append(blk)
    at, sg = np.array(atoms, float), np.array(sigmas, float)
    at.flags.writeable = False
    sg.flags.writeable = False
    return _Pieces(at, sg, stretches, tails, S)


def _validate_stretch(g, lo: float, hi: float) -> None:
    try:
        _validate_stretch_cached(g, lo, hi)
    except TypeError:  # unhashable integrator
        _validate_stretch_cached.__wrapped__(g, lo, hi)


@lru_cache(maxsize=1024)
def _validate_stretch_cached(g, lo: float, hi: float) -> None:
    x = np.linspace(lo, hi, 513)
    _check_increments(np.diff(_gvals(g, x)), lambda i: float(x[i]))


def _combine(rows: np.ndarray, weights: np.ndarray | None, how: str) -> float:
    if rows.size == 0:
        return 0.0
    if how == "max":
        return float(np.max(rows))
    w = np.ones(rows.shape[0]) if weights is None else weights
    return float(np.sum(w * rows))


def _float_cutoff(blk: QTail) -> int:
    """Largest ``k`` whose tail point stays well clear of ``at`` in floating point."""
    floor = 64 * np.finfo(float).eps * max(1.0, abs(blk.at)) / blk.span
    return max(1, int(math.floor(math.log(1.0 / floor) / math.log(blk.q))))


def _truncate_tail(S: TimeScale, blk: QTail, integrand: _Integrand, g, target: float,
                   weights, how: str, other_mass: float = 1.0, box=None):
    """Tail points kept as atoms and the per-row bound on what is dropped.

    Summation may run past the scale's nominal cutoff, down to the last tail
    points that are still distinct from ``at`` in floating point, when the
    target needs it.
    """
    K = max(S.tail_cutoff(blk), _float_cutoff(blk))
    k = np.arange(0, K + 34)
    p = np.asarray(blk.point(k), dtype=float)
    p[0] = blk.upto
    gp = _gvals(g, p[: K + 1])
    ga = float(_gvals(g, np.array([blk.at]))[0])
    mass = np.maximum(gp[1:] - ga, 0.0) * other_mass  # after keeping 1..j
    bnd = integrand.bounds(np.full(K, blk.at), p[2: K + 2]) if box is None else box(np.full(K, blk.at), p[2: K + 2])
    if bnd is not None:
        sup = np.maximum(np.abs(bnd[0]), np.abs(bnd[1]))
    else:
        vals = np.abs(integrand.atom_values(p[1:], p[:-1]))  # k = 1 .. K+33
        suffix = np.maximum.accumulate(vals[:, ::-1], axis=1)[:, ::-1]
        sup = suffix[:, 1: K + 1]
    R = sup * mass[None, :]
    if how == "max":
        score = R.max(axis=0)
    else:
        score = (R if weights is None else weights[:, None] * R).sum(axis=0)
    ok = np.nonzero(score <= target)[0]
    j = int(ok[0]) if ok.size else K - 1
    return p[1: j + 2], p[: j + 1], R[:, j]


# dense stretches -------------------------------------------------------------

def _trapezoid_weights(dG: np.ndarray) -> np.ndarray:
    c = np.zeros(dG.shape[:-1] + (dG.shape[-1] + 1,))
    c[..., :-1] += dG / 2.0
    c[..., 1:] += dG / 2.0
    return c


def _romberg(levels):
    """Richardson-corrected trapezoid sums on steps h, 2h, 4h and an error estimate."""
    fine = (4.0 * levels[0] - levels[1]) / 3.0
    coarse = (4.0 * levels[1] - levels[2]) / 3.0
    return fine, np.abs(fine - coarse)


def _cells_1d(integrand: _Integrand, g, u: np.ndarray, v: np.ndarray):
    x = u[:, None] + (v - u)[:, None] * _NODES[None, :]
    x[:, -1] = v
    F = integrand.values(x)
    G = _gvals(g, x)
    dG = _check_increments(np.diff(G, axis=1), lambda i: float(x.flat[i]))
    dg = np.maximum(G[:, -1] - G[:, 0], 0.0)
    levels = []
    for step in (1, 2, 4):
        Fs = F[..., ::step]
        dGs = np.maximum(np.diff(G[:, ::step], axis=1), 0.0)
        levels.append(np.sum(0.5 * (Fs[..., :-1] + Fs[..., 1:]) * dGs, axis=-1))
    est, err = _romberg(levels)
    err = err + 4e-15 * np.sum(np.abs(F[..., :-1]) * dG, axis=-1) + 1e-300
    bnd = integrand.bounds(u, v)
    if bnd is None:
        steps = np.diff(F, axis=-1)
        mono = np.all(steps >= 0, axis=-1) | np.all(steps <= 0, axis=-1)
        pad = np.where(mono, 0.0, np.max(np.abs(steps), axis=-1) / 2.0)
        m, M = F.min(axis=-1) - pad, F.max(axis=-1) + pad
    else:
        m, M = bnd
    Ld = np.nextafter(m * dg, -np.inf)
    Ud = np.nextafter(M * dg, np.inf)
    lo = np.maximum(Ld, est - err)
    hi = np.minimum(Ud, est + err)
    bad = lo > hi
    return np.where(bad, Ld, lo), np.where(bad, Ud, hi)


def _refine_pick(score: np.ndarray, total: float, tol: float, room: int) -> np.ndarray:
    order = np.argsort(-score, kind="stable")
    cum = np.cumsum(score[order])
    k = int(np.searchsorted(cum, total - tol / 2.0)) + 1
    k = max(1, min(k, len(order), room))
    return np.sort(order[:k])


def _refine_pick_rows(width: np.ndarray, tol: float, room: int) -> np.ndarray:
    """Union over rows above ``tol`` of the cells each of them would split."""
    totals = width.sum(axis=1)
    bad = width[totals > tol]
    srt = -np.sort(-bad, axis=1)
    cum = np.cumsum(srt, axis=1)
    k = (cum < (totals[totals > tol] - tol / 2.0)[:, None]).sum(axis=1)
    thr = srt[np.arange(len(bad)), np.minimum(k, bad.shape[1] - 1)]
    chosen = np.nonzero((bad >= thr[:, None]).any(axis=0))[0]
    if chosen.size > room:
        chosen = np.sort(chosen[np.argsort(-width.max(axis=0)[chosen], kind="stable")[:max(room, 1)]])
    return chosen


@dataclass
class _Outcome:
    lower: np.ndarray  # per row, lists of addends kept for exact summation
    upper: np.ndarray
    value: np.ndarray
    splits: int
    converged: bool


def _fsum_rows(parts: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(r) for r in parts]) if parts.ndim == 2 else np.array([math.fsum(parts)])


def _stretch(integrand: _Integrand, g, lo: float, hi: float, tol: float, weights, how: str,
             budget: int, first=None) -> _Outcome:
    u, v, clo, chi = _initial_cells(integrand, g, lo, hi) if first is None else first
    splits = 0
    history: list[float] = []
    converged = False
    while True:
        width = chi - clo
        if how == "max":
            score = width.max(axis=0)
            total = float(width.sum(axis=1).max())
        else:
            w = np.ones(width.shape[0]) if weights is None else weights
            score = (w[:, None] * width).sum(axis=0)
            total = float(score.sum())
        if total <= tol:
            converged = True
            break
        history.append(total)
        stalled = len(history) > 12 and total > 0.9 * history[-13]
        if len(u) >= budget or stalled:
            break
        if how == "max" and width.shape[0] > 1:
            pick = _refine_pick_rows(width, tol, budget - len(u))
        else:
            pick = _refine_pick(score, total, tol, budget - len(u))
        keep = np.ones(len(u), bool)
        keep[pick] = False
        mid = 0.5 * (u[pick] + v[pick])
        nu = np.concatenate([u[pick], mid])
        nv = np.concatenate([mid, v[pick]])
        nlo, nhi = _cells_1d(integrand, g, nu, nv)
        u = np.concatenate([u[keep], nu])
        v = np.concatenate([v[keep], nv])
        clo = np.concatenate([clo[:, keep], nlo], axis=1)
        chi = np.concatenate([chi[:, keep], nhi], axis=1)
        splits += len(pick)
    order = np.argsort(u, kind="stable")
    clo, chi = clo[:, order], chi[:, order]
    return _Outcome(clo, chi, 0.5 * (clo + chi), splits, converged)


# one axis --------------------------------------------------------------------

@dataclass
class _AxisResult:
    lower: np.ndarray
    upper: np.ndarray
    value: np.ndarray
    tail: np.ndarray
    splits: int
    converged: bool
    tol: float


def _initial_cells(integrand: _Integrand, g, lo: float, hi: float, n: int = 16):
    edges = np.linspace(lo, hi, n + 1)
    edges[-1] = hi
    u, v = edges[:-1].copy(), edges[1:].copy()
    return (u, v) + _cells_1d(integrand, g, u, v)


def _tail_magnitude(blk: QTail, integrand: _Integrand, g) -> np.ndarray:
    pts = np.asarray(blk.point(np.arange(1, 65)), float)
    sig = np.concatenate([[blk.upto], pts[:-1]])
    w = np.maximum(_gvals(g, sig) - _gvals(g, pts), 0.0)
    return np.sum(np.abs(integrand.atom_values(pts, sig)) * w, axis=-1)


def _integrate_axis(T: TimeScale, a: float, b: float, integrand: _Integrand, g, tol: float, *,
                    rtol: float = 0.0, weights=None, how: str = "sum",
                    budget: int | None = None) -> _AxisResult:
    """Integrate every row of ``integrand`` over ``[a, b)_T``.

    ``rtol > 0`` raises the absolute target to ``rtol`` times a rough ``∫|f| Δg``
    taken from the exact atoms, the first cells of each stretch and the head of
    each tail.
    """
    budget = max_cells() if budget is None else budget
    m = integrand.rows
    pcs = _pieces(T, a, b)
    for lo, hi in pcs.stretches:
        _validate_stretch(g, lo, hi)
    starts = []
    for lo, hi in pcs.stretches:
        f = integrand.on_stretch(lo, hi)
        starts.append((f, lo, hi, _initial_cells(f, g, lo, hi)))

    def atom_terms(t, s):
        w = _check_increments(_gvals(g, s) - _gvals(g, t), lambda i: float(t[i]))
        return integrand.atom_values(t, s) * w[None, :]

    terms = [atom_terms(pcs.atoms, pcs.sigmas)] if pcs.atoms.size else []
    if rtol > 0:
        mag = np.zeros(m)
        for part in terms:
            mag += np.sum(np.abs(part), axis=-1)
        for *_, (_, _, clo, chi) in starts:
            mag += np.sum(np.abs(0.5 * (clo + chi)), axis=-1)
        for blk in pcs.tails:
            mag += _tail_magnitude(blk, integrand, g)
        tol = max(tol, rtol * _combine(mag, weights, how))
    tail = np.zeros(m)
    for blk in pcs.tails:
        tk, sk, bound = _truncate_tail(pcs.scale, blk, integrand, g, 1e-3 * tol / len(pcs.tails), weights, how)
        terms.append(atom_terms(tk, sk))
        tail += bound
    parts_lo = list(terms)
    parts_hi = list(terms)
    parts_val = list(terms)
    tail_total = _combine(tail, weights, how)
    share = (tol - tail_total if tol > tail_total else tol) / max(1, len(starts))
    splits = 0
    ok = True
    for f, lo, hi, first in starts:
        out = _stretch(f, g, lo, hi, share, weights, how, budget, first)
        parts_lo.append(out.lower)
        parts_hi.append(out.upper)
        parts_val.append(out.value)
        splits += out.splits
        ok = ok and out.converged
    if not parts_lo:
        z = np.zeros(m)
        return _AxisResult(z, z, z, tail, 0, True, tol)
    lower = _fsum_rows(np.concatenate(parts_lo, axis=1))
    upper = _fsum_rows(np.concatenate(parts_hi, axis=1))
    value = _fsum_rows(np.concatenate(parts_val, axis=1))
    return _AxisResult(lower, upper, value, tail, splits, ok, tol)


def _finish(res: _AxisResult, strict: bool, what: str) -> IntegralResult:
    tol = res.tol
    out = _result(float(res.lower[0]), float(res.upper[0]), float(res.value[0]), res.splits,
                  float(res.tail[0]), res.converged, tol)
    if strict and not out.converged:
        raise NoConvergence(
            f"{what} did not reach tol={tol:g} within {max_cells()} cells "
            f"(gap {out.gap:.3g}, tail {out.tail_bound:.3g})", out)
    return out


def _endpoints(T: TimeScale, a, b) -> tuple[float, float]:
    from .errors import EndpointNotInScale, PointNotInScale

    a = T.min if a is None else a
    b = T.max if b is None else b
    try:
        a, b = T.snap(a), T.snap(b)
    except PointNotInScale as exc:
        raise EndpointNotInScale(exc.t) from None
    if a > b:
        raise ValueError(f"need a <= b, got a={a}, b={b}")
    return a, b


# public operations -----------------------------------------------------------

def rs_integral(T: TimeScale, f, g, a: float | None = None, b: float | None = None,
                tol: float = 1e-8, *, rtol: float = 0.0, strict: bool = True) -> IntegralResult:
    """``∫_a^b f Δg`` over ``[a, b)_T`` for a non-decreasing integrator ``g``.

    ``f`` may be an :class:`ExprFn` (certified cell bounds) or any vectorised
    callable (sampled bounds). Raises :class:`NoConvergence` when the
    refinement budget runs out, unless ``strict`` is false. With ``rtol > 0``
    the target becomes ``max(tol, rtol * ∫|f| Δg)`` (roughly estimated).
    """
    a, b = _endpoints(T, a, b)
    if a == b:
        return _zero()
    res = _integrate_axis(T, a, b, _as_integrand(f), g, tol, rtol=rtol)
    return _finish(res, strict, "integral")


def rs_integral_via_transition(T: TimeScale, f, g, a: float | None = None, b: float | None = None,
                               tol: float = 1e-8, *, rtol: float = 0.0, strict: bool = True) -> IntegralResult:
    """``∫_a^b f g^Δ Δt``: the same integral computed against the identity.

    Scattered points use the exact quotient ``(g(σ)-g)/μ``; dense stretches use
    Richardson-extrapolated derivatives of ``g`` and sampled cell bounds.
    """
    a, b = _endpoints(T, a, b)
    if a == b:
        return _zero()
    pcs = _pieces(T, a, b)
    for lo, hi in pcs.stretches:
        _validate_stretch(g, lo, hi)
    if pcs.atoms.size:
        _check_increments(_gvals(g, pcs.sigmas) - _gvals(g, pcs.atoms), lambda i: float(pcs.atoms[i]))
    res = _integrate_axis(T, a, b, _TransitionIntegrand(f, g), identity(), tol, rtol=rtol)
    return _finish(res, strict, "transition integral")


class Cumulative:
    """``t ↦ ∫_a^t f Δg`` on ``[a, b]_T``."""

    def __init__(self, T: TimeScale, f, g, a: float, b: float, tol: float = 1e-8):
        self.T, self.f, self.g, self.tol = T, f, g, tol
        self.a, self.b = _endpoints(T, a, b)
        self._cache: dict[float, IntegralResult] = {}

    def __call__(self, t: float) -> IntegralResult:
        t = self.T.snap(t)
        if not self.a <= t <= self.b:
            raise ValueError(f"{t} outside [{self.a}, {self.b}]")
        if t not in self._cache:
            self._cache[t] = rs_integral(self.T, self.f, self.g, self.a, t, self.tol)
        return self._cache[t]

    def on_grid(self, grid: Sequence[float]) -> list[IntegralResult]:
        """Values on an increasing grid starting at ``a``, built by additivity."""
        grid = [self.T.snap(x) for x in grid]
        if grid[0] != self.a:
            raise ValueError("grid must start at a")
        out = [_zero()]
        share = self.tol / max(1, len(grid) - 1)
        for lo, hi in zip(grid, grid[1:]):
            piece = rs_integral(self.T, self.f, self.g, lo, hi, share)
            prev = out[-1]
            out.append(IntegralResult(prev.value + piece.value, prev.lower + piece.lower,
                                      prev.upper + piece.upper, prev.gap + piece.gap,
                                      prev.refinements + piece.refinements,
                                      prev.tail_bound + piece.tail_bound,
                                      prev.converged and piece.converged))
        return out


def cumulative(T: TimeScale, f, g, a: float, b: float, tol: float = 1e-8) -> Cumulative:
    return Cumulative(T, f, g, a, b, tol)


# partitions and sums ---------------------------------------------------------

def _cell_range(T: TimeScale, f: _Integrand, u: float, v: float) -> tuple[float, float]:
    """Bounds of ``f`` over ``[u, v)_T``; exact on scattered points."""
    lows: list[float] = []
    highs: list[float] = []
    pts: list[float] = []
    for blk in T.components:
        if blk.lo >= v or blk.hi < u:
            continue
        if isinstance(blk, Point):
            pts.append(blk.value)
        elif isinstance(blk, Interval):
            lo, hi = max(blk.lo, u), min(blk.hi, v)
            if lo == hi:
                if lo < v:
                    pts.append(lo)
                continue
            bnd = f.bounds(np.array([lo]), np.array([hi]))
            if bnd is None:
                x = np.linspace(lo, hi, 17)
                F = f.values(x)[0]
                steps = np.diff(F)
                pad = 0.0 if (np.all(steps >= 0) or np.all(steps <= 0)) else float(np.max(np.abs(steps))) / 2
                lows.append(float(F.min()) - pad)
                highs.append(float(F.max()) + pad)
            else:
                lows.append(float(bnd[0][0, 0]))
                highs.append(float(bnd[1][0, 0]))
        else:
            if u <= blk.at:
                # the accumulation point and every tail point below v
                k0 = _first_k_below(blk, v)
                bnd = f.bounds(np.array([blk.at]), np.array([float(blk.point(k0))]))
                if bnd is None:
                    vals = f.values(np.concatenate([[blk.at], blk.point(np.arange(k0, k0 + 64))]))[0]
                    lows.append(float(vals.min()))
                    highs.append(float(vals.max()))
                else:
                    lows.append(float(bnd[0][0, 0]))
                    highs.append(float(bnd[1][0, 0]))
            else:
                k_hi = _first_k_below(blk, v)
                k = k_hi
                while True:
                    p = float(blk.point(k))
                    if p < u - 1e-15 * max(1.0, abs(u)):
                        break
                    pts.append(p)
                    k += 1
    if pts:
        vals = f.values(np.array(pts))[0]
        lows.append(float(vals.min()))
        highs.append(float(vals.max()))
    return min(lows), max(highs)


def _first_k_below(blk: QTail, v: float) -> int:
    """Smallest ``k >= 1`` with ``point(k) < v``."""
    if v > blk.hi:
        return 1
    k = max(1, int(math.floor(math.log(blk.span / max(v - blk.at, 1e-300)) / math.log(blk.q))))
    while float(blk.point(k)) >= v:
        k += 1
    while k > 1 and float(blk.point(k - 1)) < v:
        k -= 1
    return k


def darboux_bounds(T: TimeScale, f, g, P: Partition) -> tuple[float, float]:
    """Lower and upper Darboux–Stieltjes sums ``(Σ m_i Δg_i, Σ M_i Δg_i)``."""
    integrand = _as_integrand(f)
    pts = np.asarray(P.points)
    dg = _check_increments(np.diff(_gvals(g, pts)), lambda i: float(pts[i]))
    lows, highs = [], []
    for (u, v), d in zip(P.cells(), dg):
        m, M = _cell_range(T, integrand, u, v)
        lows.append(m * d)
        highs.append(M * d)
    return math.fsum(lows), math.fsum(highs)


@dataclass(frozen=True)
class RSSum:
    value: float
    partition: Partition
    tags: tuple[float, ...]


def rs_sum(T: TimeScale, f, g, P: Partition, X: Sequence[float]) -> RSSum:
    """``Σ f(x_i) (g(t_i) - g(t_{i-1}))`` with ``x_i ∈ [t_{i-1}, t_i)_T``."""
    if len(X) != P.n:
        raise SelectionOutOfCell(f"need {P.n} tags, got {len(X)}")
    tags = []
    for i, ((u, v), x) in enumerate(zip(P.cells(), X)):
        if x not in T:
            raise SelectionOutOfCell(f"tag {x} is not a point of the time scale")
        x = T.snap(x)
        if not u <= x < v:
            raise SelectionOutOfCell(f"tag {x} outside cell {i + 1} = [{u}, {v})")
        tags.append(x)
    pts = np.asarray(P.points)
    dg = _check_increments(np.diff(_gvals(g, pts)), lambda i: float(pts[i]))
    vals = _as_integrand(f).values(np.array(tags))[0]
    return RSSum(math.fsum(vals * dg), P, tuple(tags))


def linearity_check(T: TimeScale, f: ExprFn, g: ExprFn, a: float, b: float, alpha: float, beta: float,
                    tol: float = 1e-8) -> dict:
    """Compare ``∫ αf Δ(βg)`` with ``αβ ∫ f Δg``."""
    if beta < 0:
        raise ValueError("beta must be >= 0 so that beta*g stays non-decreasing")
    lhs = rs_integral(T, alpha * f, beta * g, a, b, tol)
    base = rs_integral(T, f, g, a, b, tol)
    rhs = alpha * beta * base.value
    bound = 2 * tol * max(1.0, abs(alpha * beta))
    diff = abs(lhs.value - rhs)
    return {"alpha": alpha, "beta": beta, "lhs": lhs.value, "rhs": rhs, "difference": diff,
            "bound": bound, "passed": diff <= bound}


# double integrals ------------------------------------------------------------

def _cells_2d(f: ExprFn, g1, g2, u1, v1, u2, v2):
    x = u1[:, None] + (v1 - u1)[:, None] * _NODES_2D[None, :]
    y = u2[:, None] + (v2 - u2)[:, None] * _NODES_2D[None, :]
    x[:, -1] = v1
    y[:, -1] = v2
    F = np.asarray(f(x[:, :, None], y[:, None, :]), dtype=float)
    G1, G2 = _gvals(g1, x), _gvals(g2, y)
    d1 = _check_increments(np.diff(G1, axis=1), lambda i: float(x.flat[i]))
    d2 = _check_increments(np.diff(G2, axis=1), lambda i: float(y.flat[i]))
    levels = []
    for step in (1, 2, 4):
        c1 = _trapezoid_weights(np.maximum(np.diff(G1[:, ::step], axis=1), 0.0))
        c2 = _trapezoid_weights(np.maximum(np.diff(G2[:, ::step], axis=1), 0.0))
        levels.append(np.einsum("ni,nij,nj->n", c1, F[:, ::step, ::step], c2))
    est, err = _romberg(levels)
    c1f, c2f = _trapezoid_weights(d1), _trapezoid_weights(d2)
    err = err + 4e-15 * np.einsum("ni,nij,nj->n", c1f, np.abs(F), c2f) + 1e-300
    dg = np.maximum(G1[:, -1] - G1[:, 0], 0.0) * np.maximum(G2[:, -1] - G2[:, 0], 0.0)
    m, M = f.bounds(u1, v1, u2, v2)
    Ld = np.nextafter(m * dg, -np.inf)
    Ud = np.nextafter(M * dg, np.inf)
    lo = np.maximum(Ld, est - err)
    hi = np.minimum(Ud, est + err)
    bad = lo > hi
    var1 = (F.max(axis=1) - F.min(axis=1)).max(axis=1)
    var2 = (F.max(axis=2) - F.min(axis=2)).max(axis=1)
    return np.where(bad, Ld, lo), np.where(bad, Ud, hi), var2 > var1


def _box(f: ExprFn, g1, g2, r1, r2, tol: float, budget: int) -> _Outcome:
    e1 = np.linspace(r1[0], r1[1], 5)
    e2 = np.linspace(r2[0], r2[1], 5)
    e1[-1], e2[-1] = r1[1], r2[1]
    U1, U2 = np.meshgrid(e1[:-1], e2[:-1], indexing="ij")
    V1, V2 = np.meshgrid(e1[1:], e2[1:], indexing="ij")
    u1, v1, u2, v2 = (a.ravel().copy() for a in (U1, V1, U2, V2))
    lo, hi, axis2 = _cells_2d(f, g1, g2, u1, v1, u2, v2)
    splits = 0
    history: list[float] = []
    converged = False
    while True:
        width = hi - lo
        total = float(width.sum())
        if total <= tol:
            converged = True
            break
        history.append(total)
        if len(u1) >= budget or (len(history) > 12 and total > 0.9 * history[-13]):
            break
        pick = _refine_pick(width, total, tol, budget - len(u1))
        keep = np.ones(len(u1), bool)
        keep[pick] = False
        s2 = axis2[pick]
        a1, b1, a2, b2 = u1[pick], v1[pick], u2[pick], v2[pick]
        m1 = np.where(s2, b1, 0.5 * (a1 + b1))
        m2 = np.where(s2, 0.5 * (a2 + b2), b2)
        # first child keeps the lower half along the split axis
        n_u1 = np.concatenate([a1, np.where(s2, a1, m1)])
        n_v1 = np.concatenate([m1, b1])
        n_u2 = np.concatenate([a2, np.where(s2, m2, a2)])
        n_v2 = np.concatenate([m2, b2])
        nlo, nhi, nax = _cells_2d(f, g1, g2, n_u1, n_v1, n_u2, n_v2)
        u1 = np.concatenate([u1[keep], n_u1])
        v1 = np.concatenate([v1[keep], n_v1])
        u2 = np.concatenate([u2[keep], n_u2])
        v2 = np.concatenate([v2[keep], n_v2])
        lo = np.concatenate([lo[keep], nlo])
        hi = np.concatenate([hi[keep], nhi])
        axis2 = np.concatenate([axis2[keep], nax])
        splits += len(pick)
    return _Outcome(lo[None], hi[None], 0.5 * (lo + hi)[None], splits, converged)


def rs_double_integral(T1: TimeScale, T2: TimeScale, f: ExprFn, g1, g2, rect: Sequence[float],
                       tol: float = 1e-8, *, rtol: float = 0.0, strict: bool = True) -> IntegralResult:
    """Double Δ-integral of ``f(t, s)`` over ``[a, b)_T1 × [c, d)_T2``."""
    if f.arity != 2:
        f = f.as_bivariate()
    a, b = _endpoints(T1, rect[0], rect[1])
    c, d = _endpoints(T2, rect[2], rect[3])
    if a == b or c == d:
        return _zero()
    budget = max_cells()
    p1, p2 = _pieces(T1, a, b), _pieces(T2, c, d)
    for lo, hi in p1.stretches:
        _validate_stretch(g1, lo, hi)
    for lo, hi in p2.stretches:
        _validate_stretch(g2, lo, hi)
    G1 = max(float(_gvals(g1, np.array([b]))[0] - _gvals(g1, np.array([a]))[0]), 0.0)
    G2 = max(float(_gvals(g2, np.array([d]))[0] - _gvals(g2, np.array([c]))[0]), 0.0)
    if rtol > 0:
        xs = T1.grid_points(a, b, (b - a) / 16)
        ys = T2.grid_points(c, d, (d - c) / 16)
        mean_abs = float(np.mean(np.abs(np.asarray(f(xs[:, None], ys[None, :]), float))))
        tol = max(tol, rtol * mean_abs * G1 * G2)
    n_tails = len(p1.tails) + len(p2.tails)
    tail = 0.0
    t1, s1 = [p1.atoms], [p1.sigmas]
    for blk in p1.tails:
        def box1(lo, hi):
            return f.bounds(lo, hi, np.full_like(lo, c), np.full_like(lo, d))
        tk, sk, R = _truncate_tail(p1.scale, blk, _ExprIntegrand(f), g1, 1e-3 * tol / n_tails, None, "sum",
                                   other_mass=G2, box=box1)
        t1.append(tk)
        s1.append(sk)
        tail += float(R[0])
    t2, s2 = [p2.atoms], [p2.sigmas]
    for blk in p2.tails:
        def box2(lo, hi):
            return f.bounds(np.full_like(lo, a), np.full_like(lo, b), lo, hi)
        tk, sk, R = _truncate_tail(p2.scale, blk, _ExprIntegrand(f), g2, 1e-3 * tol / n_tails, None, "sum",
                                   other_mass=G1, box=box2)
        t2.append(tk)
        s2.append(sk)
        tail += float(R[0])
    t1a, s1a = np.concatenate(t1), np.concatenate(s1)
    t2a, s2a = np.concatenate(t2), np.concatenate(s2)
    w1 = _check_increments(_gvals(g1, s1a) - _gvals(g1, t1a), "axis 1") if t1a.size else t1a
    w2 = _check_increments(_gvals(g2, s2a) - _gvals(g2, t2a), "axis 2") if t2a.size else t2a

    lows: list[np.ndarray] = []
    highs: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    if t1a.size and t2a.size:
        exact = (np.asarray(f(t1a[:, None], t2a[None, :]), float) * w1[:, None] * w2[None, :]).ravel()
        lows.append(exact)
        highs.append(exact)
        vals.append(exact)
    groups = (len(p2.stretches) if t1a.size else 0) + (len(p1.stretches) if t2a.size else 0) \
        + len(p1.stretches) * len(p2.stretches)
    share = (tol - tail if tol > tail else tol) / max(1, groups)
    splits = 0
    ok = True

    def add(out: _Outcome, weights=None):
        nonlocal splits, ok
        wl = out.lower if weights is None else out.lower * weights[:, None]
        wh = out.upper if weights is None else out.upper * weights[:, None]
        wv = out.value if weights is None else out.value * weights[:, None]
        lows.append(wl.ravel())
        highs.append(wh.ravel())
        vals.append(wv.ravel())
        splits += out.splits
        ok = ok and out.converged

    if t1a.size:
        for lo, hi in p2.stretches:
            add(_stretch(_RowsIntegrand(f, t1a, "s"), g2, lo, hi, share, w1, "sum", budget), w1)
    if t2a.size:
        for lo, hi in p1.stretches:
            add(_stretch(_RowsIntegrand(f, t2a, "t"), g1, lo, hi, share, w2, "sum", budget), w2)
    for r1 in p1.stretches:
        for r2 in p2.stretches:
            add(_box(f, g1, g2, r1, r2, share, budget))
    if not lows:
        return _zero()
    lower = math.fsum(np.concatenate(lows))
    upper = math.fsum(np.concatenate(highs))
    value = math.fsum(np.concatenate(vals))
    out = _result(lower, upper, value, splits, tail, ok, tol)
    if strict and not out.converged:
        raise NoConvergence(f"double integral did not reach tol={tol:g} (gap {out.gap:.3g})", out)
    return out


class _InnerIntegral(_Integrand):
    """``x ↦ ∫ f(x, ·) Δg`` along the other axis, memoised per point."""

    def __init__(self, T: TimeScale, lo: float, hi: float, f: ExprFn, g, free: str, tol: float):
        self.T, self.lo, self.hi, self.f, self.g, self.free, self.tol = T, lo, hi, f, g, free, tol
        self.cache: dict[float, float] = {}
        self.max_error = 0.0
        self.splits = 0
        self.ok = True

    def values(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        todo = np.unique(flat[[v not in self.cache for v in flat.tolist()]]) if flat.size else flat
        if todo.size:
            res = _integrate_axis(self.T, self.lo, self.hi, _RowsIntegrand(self.f, todo, self.free), self.g,
                                  self.tol, how="max")
            err = (res.upper - res.lower) / 2.0 + res.tail
            self.max_error = max(self.max_error, float(err.max()))
            self.splits += res.splits
            self.ok = self.ok and res.converged
            self.cache.update(zip(todo.tolist(), res.value.tolist()))
        return np.array([self.cache[v] for v in flat.tolist()]).reshape((1,) + x.shape)


def iterated_integral(T1: TimeScale, T2: TimeScale, f: ExprFn, g1, g2, rect: Sequence[float],
                      order: str = "ts", tol: float = 1e-8, *, strict: bool = True) -> IntegralResult:
    """Iterated integral, ``order`` naming the variables from outer to inner.

    ``"ts"`` is ``∫_a^b (∫_c^d f(t, s) Δg2(s)) Δg1(t)``; ``"st"`` swaps them.
    """
    if order not in ("ts", "st"):
        raise ValueError("order must be 'ts' or 'st'")
    if f.arity != 2:
        f = f.as_bivariate()
    a, b = _endpoints(T1, rect[0], rect[1])
    c, d = _endpoints(T2, rect[2], rect[3])
    if a == b or c == d:
        return _zero()
    if order == "ts":
        outer = (T1, a, b, g1)
        inner = _InnerIntegral(T2, c, d, f, g2, "s", 0.0)
    else:
        outer = (T2, c, d, g2)
        inner = _InnerIntegral(T1, a, b, f, g1, "t", 0.0)
    To, lo, hi, go = outer
    G = max(float(_gvals(go, np.array([hi]))[0] - _gvals(go, np.array([lo]))[0]), 0.0)
    inner.tol = tol / (4.0 * G) if G > 0 else tol
    try:
        res = _integrate_axis(To, lo, hi, inner, go, tol / 2.0)
    except NoConvergence as exc:  # pragma: no cover - surfaced with the axis named
        raise NoConvergence(f"inner integral along {'s' if order == 'ts' else 't'}: {exc}", exc.result)
    widen = inner.max_error * G
    lower = float(res.lower[0]) - widen
    upper = float(res.upper[0]) + widen
    out = _result(lower, upper, float(res.value[0]), res.splits + inner.splits, float(res.tail[0]),
                  res.converged and inner.ok, tol)
    if strict and not out.converged:
        axis = "outer" if not res.converged else "inner"
        raise NoConvergence(f"iterated integral ({order}) did not converge on the {axis} axis "
                            f"(gap {out.gap:.3g})", out)
    return out
