"""Bounded time scales: finite unions of points, closed intervals and q-geometric tails.

A :class:`TimeScale` is normalised at construction: components are sorted,
overlapping or touching intervals merged, and points swallowed by intervals
dropped, so the jump operators are unambiguous. A ``qtail(q, at, upto)``
contributes the points ``at + (upto - at) * q**-k`` for ``k >= 0`` together
with their accumulation point ``at``.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import (
    EmptyRestriction,
    EndpointNotInScale,
    MismatchedEndpoints,
    NonConvergent,
    PointNotInScale,
)

DEFAULT_TAIL_EPS = 1e-12


@dataclass(frozen=True)
class Point:
    value: float

    @property
    def lo(self) -> float:
        return self.value

    @property
    def hi(self) -> float:
        return self.value


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class QTail:
    """The points ``at + (upto - at) q^-k``, ``k >= 1``, and ``at`` itself.

    The top point ``upto`` (``k = 0``) is stored as an ordinary component
    next to the tail so it can merge with a neighbouring interval.
    """

    q: float
    at: float
    upto: float

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError(f"qtail needs q > 1, got {self.q}")
        if not self.upto > self.at:
            raise ValueError("qtail needs upto > at (accumulation from above)")

    @property
    def lo(self) -> float:
        return self.at

    @property
    def hi(self) -> float:
        return self.point(1)

    @property
    def span(self) -> float:
        return self.upto - self.at

    def point(self, k):
        return self.at + self.span * np.power(self.q, -np.asarray(k, dtype=float)) if np.ndim(k) else \
            self.at + self.span * self.q ** (-k)

    def index_of(self, t: float) -> int | None:
        """``k`` with ``point(k) == t`` (within rounding), ``-1`` for ``at``, ``None`` if absent."""
        if t == self.at:
            return -1
        if t < self.at or t > self.upto * (1 + 1e-15) + 1e-300:
            return None
        d = t - self.at
        if d <= 1e-15 * max(1.0, abs(self.at)):
            return -1
        k = round(math.log(self.span / d) / math.log(self.q))
        if k < 0:
            return None
        pk = self.point(k)
        if abs(pk - t) <= 1e-9 * (pk - self.at):
            return k
        return None

    def cutoff(self, eps: float) -> int:
        """Largest ``k`` with ``q^-k >= eps``."""
        return max(1, int(math.floor(math.log(1.0 / eps) / math.log(self.q) + 1e-9)))


Component = Union[Point, Interval, QTail]


class PointClass(enum.Flag):
    RIGHT_SCATTERED = enum.auto()
    RIGHT_DENSE = enum.auto()
    LEFT_SCATTERED = enum.auto()
    LEFT_DENSE = enum.auto()
    ISOLATED = RIGHT_SCATTERED | LEFT_SCATTERED
    DENSE = RIGHT_DENSE | LEFT_DENSE


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def _normalise(components: Sequence[Component]) -> tuple[Component, ...]:
    points: list[float] = []
    intervals: list[tuple[float, float]] = []
    tails: list[QTail] = []
    for c in components:
        if isinstance(c, Point):
            points.append(float(c.value))
        elif isinstance(c, Interval):
            intervals.append((float(c.lo), float(c.hi)))
        elif isinstance(c, QTail):
            tails.append(QTail(float(c.q), float(c.at), float(c.upto)))
            points.append(float(c.upto))
        else:
            raise TypeError(f"not a time-scale component: {c!r}")
    if not (points or intervals or tails):
        raise EmptyRestriction("a time scale must be nonempty")
    for v in points + [x for iv in intervals for x in iv] + [x for tl in tails for x in (tl.at, tl.upto)]:
        if not math.isfinite(v):
            raise ValueError("time scales must be bounded")

    merged: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1] or merged and _close(lo, merged[-1][1]):
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])

    def in_interval(v: float) -> bool:
        i = bisect.bisect_right([m[0] for m in merged], v + 1e-12 * max(1.0, abs(v))) - 1
        return i >= 0 and v <= merged[i][1] + 1e-12 * max(1.0, abs(v))

    tails.sort(key=lambda tl: tl.at)
    for i, tl in enumerate(tails):
        for other in tails[i + 1:]:
            if other.at < tl.hi or _close(other.at, tl.hi):
                raise ValueError("q-tails overlap")
        for lo, hi in merged:
            if lo < tl.hi and hi > tl.at and not _close(hi, tl.at):
                raise ValueError(f"interval [{lo}, {hi}] overlaps q-tail at {tl.at}")

    kept: list[float] = []
    for v in sorted(points):
        if kept and _close(v, kept[-1]):
            continue
        if in_interval(v):
            continue
        if any(tl.index_of(v) is not None and not _close(v, tl.upto) for tl in tails):
            continue
        for tl in tails:
            if tl.at < v < tl.hi and tl.index_of(v) is None:
                raise ValueError(f"point {v} lies inside the q-tail at {tl.at}")
        kept.append(v)

    blocks: list[Component] = [Point(v) for v in kept]
    blocks += [Interval(lo, hi) for lo, hi in merged]
    blocks += tails
    blocks.sort(key=lambda b: (b.lo, b.hi))
    return tuple(blocks)


@dataclass(frozen=True)
class TimeScale:
    """A nonempty bounded time scale."""

    components: tuple[Component, ...]
    tail_eps: float = DEFAULT_TAIL_EPS
    _mins: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __init__(self, components: Sequence[Component], tail_eps: float = DEFAULT_TAIL_EPS):
        object.__setattr__(self, "components", _normalise(components))
        object.__setattr__(self, "tail_eps", float(tail_eps))
        object.__setattr__(self, "_mins", tuple(b.lo for b in self.components))

    # constructors --------------------------------------------------------
    @classmethod
    def interval(cls, lo: float, hi: float) -> "TimeScale":
        return cls([Interval(lo, hi)])

    @classmethod
    def points(cls, values: Sequence[float]) -> "TimeScale":
        return cls([Point(v) for v in values])

    @classmethod
    def integers(cls, lo: int, hi: int) -> "TimeScale":
        return cls([Point(float(k)) for k in range(int(math.ceil(lo)), int(math.floor(hi)) + 1)])

    @classmethod
    def hgrid(cls, lo: float, hi: float, h: float) -> "TimeScale":
        if not h > 0:
            raise ValueError("hgrid step must be positive")
        n = int(math.floor((hi - lo) / h + 1e-9))
        return cls([Point(lo + k * h) for k in range(n + 1)])

    @classmethod
    def qtail(cls, q: float, at: float, upto: float) -> "TimeScale":
        return cls([QTail(q, at, upto)])

    def union(self, other: "TimeScale") -> "TimeScale":
        return TimeScale(self.components + other.components, min(self.tail_eps, other.tail_eps))

    # basic queries -------------------------------------------------------
    @property
    def min(self) -> float:
        return self.components[0].lo

    @property
    def max(self) -> float:
        return max(b.hi for b in self.components)

    @property
    def is_discrete(self) -> bool:
        return all(isinstance(b, Point) for b in self.components)

    def _locate(self, t: float) -> tuple[int, float, int | None]:
        """Index of the first block containing ``t``, the snapped value, and the tail index."""
        t = float(t)
        slack = 1e-12 * max(1.0, abs(t))
        i = bisect.bisect_right(self._mins, t + slack) - 1
        for j in range(max(0, i - 2), min(len(self.components), i + 1)):
            b = self.components[j]
            if isinstance(b, Point):
                if _close(t, b.value):
                    return j, b.value, None
            elif isinstance(b, Interval):
                if b.lo - slack <= t <= b.hi + slack:
                    if _close(t, b.lo):
                        return j, b.lo, None
                    if _close(t, b.hi):
                        return j, b.hi, None
                    return j, t, None
            else:
                k = b.index_of(t)
                if k == -1:
                    return j, b.at, None
                if k is not None and k >= 1:
                    return j, float(b.point(k)), k
        raise PointNotInScale(t)

    def __contains__(self, t: float) -> bool:
        try:
            self._locate(t)
        except PointNotInScale:
            return False
        return True

    def snap(self, t: float) -> float:
        """The canonical member equal to ``t`` up to rounding."""
        return self._locate(t)[1]

    # jump operators --------------------------------------------------------
    def sigma(self, t: float) -> float:
        j, t, k = self._locate(t)
        b = self.components[j]
        nxt = self.components[j + 1].lo if j + 1 < len(self.components) else t
        if isinstance(b, Interval) and t < b.hi:
            return t
        if isinstance(b, QTail):
            if k is None:
                return t
            if k >= 2:
                return float(b.point(k - 1))
        return nxt

    def rho(self, t: float) -> float:
        j, t, k = self._locate(t)
        b = self.components[j]
        prv = self.components[j - 1].hi if j > 0 else t
        if isinstance(b, Interval) and t > b.lo:
            return t
        if isinstance(b, QTail) and k is not None:
            return float(b.point(k + 1))
        return prv

    def mu(self, t: float) -> float:
        t = self.snap(t)
        return self.sigma(t) - t

    def classify(self, t: float) -> PointClass:
        """Topological classification: the maximum has no points to its right and
        counts as right-scattered (likewise the minimum on the left), although
        the jump conventions give ``sigma(max) = max``."""
        t = self.snap(t)
        right_dense = self.sigma(t) == t and t < self.max
        left_dense = self.rho(t) == t and t > self.min
        right = PointClass.RIGHT_DENSE if right_dense else PointClass.RIGHT_SCATTERED
        left = PointClass.LEFT_DENSE if left_dense else PointClass.LEFT_SCATTERED
        return right | left

    # restriction and partitions -------------------------------------------
    def _endpoint(self, t: float) -> float:
        try:
            return self.snap(t)
        except PointNotInScale:
            raise EndpointNotInScale(t) from None

    def restrict(self, a: float, b: float) -> "TimeScale":
        """``[a, b] ∩ T``; both endpoints must belong to the scale."""
        a = self._endpoint(a)
        b = self._endpoint(b)
        if a > b:
            raise EmptyRestriction(f"[{a}, {b}] is empty")
        if a == b:
            raise ValueError("restriction needs a < b")
        out: list[Component] = []
        for blk in self.components:
            if blk.hi < a or blk.lo > b:
                if not (isinstance(blk, QTail) and blk.lo <= b and blk.upto >= a):
                    continue
            if isinstance(blk, Point):
                if a <= blk.value <= b:
                    out.append(blk)
            elif isinstance(blk, Interval):
                lo, hi = max(blk.lo, a), min(blk.hi, b)
                if lo < hi:
                    out.append(Interval(lo, hi))
                elif lo == hi:
                    out.append(Point(lo))
            else:
                out.extend(_restrict_tail(blk, a, b, self.tail_eps))
        return TimeScale(out, self.tail_eps)

    def tail_cutoff(self, blk: QTail) -> int:
        """Deepest tail index sampled or gridded: within ``tail_eps`` and with
        consecutive points still farther apart than the point-identification slack."""
        gap = 4e-12 * max(1.0, abs(blk.at), abs(blk.upto)) / (blk.span * (1.0 - 1.0 / blk.q))
        resolvable = int(math.floor(math.log(1.0 / gap) / math.log(blk.q))) if gap < 1.0 else 1
        return max(1, min(blk.cutoff(self.tail_eps), resolvable))

    def grid_points(self, a: float, b: float, mesh: float) -> np.ndarray:
        """Sorted members of ``[a, b]_T``: every scattered point (tails up to the
        cutoff) and dense stretches subdivided to spacing at most ``mesh``."""
        a = self._endpoint(a)
        b = self._endpoint(b)
        if not mesh > 0:
            raise ValueError("target mesh must be positive")
        pts: list[np.ndarray] = [np.array([a, b])]
        for blk in self.restrict(a, b).components:
            if isinstance(blk, Point):
                pts.append(np.array([blk.value]))
            elif isinstance(blk, Interval):
                n = max(1, int(math.ceil(blk.length / mesh - 1e-9)))
                pts.append(np.linspace(blk.lo, blk.hi, n + 1))
            else:
                k = np.arange(1, self.tail_cutoff(blk) + 1)
                pts.append(np.concatenate([[blk.at], blk.point(k)]))
        return np.unique(np.concatenate(pts))

    def make_partition(self, a: float, b: float, target_mesh: float) -> "Partition":
        return Partition(self, tuple(self.grid_points(a, b, target_mesh).tolist()))

    def random_points(self, rng: np.random.Generator, n: int, a: float | None = None,
                      b: float | None = None) -> np.ndarray:
        """``n`` random members of ``[a, b]_T`` (components chosen uniformly)."""
        S = self if a is None else self.restrict(a, b)
        blocks = S.components
        out = np.empty(n)
        choice = rng.integers(0, len(blocks), n)
        for i, c in enumerate(choice):
            blk = blocks[c]
            if isinstance(blk, Point):
                out[i] = blk.value
            elif isinstance(blk, Interval):
                out[i] = rng.uniform(blk.lo, blk.hi)
            else:
                k = int(rng.integers(0, S.tail_cutoff(blk) + 1))
                out[i] = blk.at if k == 0 else float(blk.point(k))
        return out

    # Δ-derivative ----------------------------------------------------------
    def delta_derivative(self, f, t: float, h0: float | None = None, tol: float = 1e-8) -> float:
        """``f^Δ(t)``: exact forward quotient at right-scattered points, Richardson
        extrapolated one-sided quotients at right-dense points."""
        j, t, k = self._locate(t)
        s = self.sigma(t)
        if s > t:
            return (float(f(s)) - float(f(t))) / (s - t)
        blk = self.components[j]
        if isinstance(blk, Interval):
            nxt = self.components[j + 1] if j + 1 < len(self.components) else None
            if t == blk.hi and isinstance(nxt, QTail) and nxt.at == t:
                return _tail_derivative(f, nxt, h0, tol)
            h = 1e-3 * blk.length if h0 is None else float(h0)
            return float(dense_derivative(f, np.array([t]), blk.lo, blk.hi, h, tol)[0])
        if isinstance(blk, QTail):
            return _tail_derivative(f, blk, h0, tol)
        raise ValueError(f"Δ-derivative is undefined at the isolated maximum {t}")

    def to_spec(self) -> str:
        from .scalespec import format_scale

        return format_scale(self)

    def __str__(self) -> str:
        return self.to_spec()


def _restrict_tail(blk: QTail, a: float, b: float, eps: float) -> list[Component]:
    if b <= blk.at:
        return [Point(blk.at)] if a <= blk.at else []
    ka = blk.index_of(a) if a > blk.at else -1
    kb = blk.index_of(b) if b < blk.upto else 0
    if a > blk.at:
        # finitely many tail points remain
        if ka is None:
            ka = int(math.floor(math.log(blk.span / (a - blk.at)) / math.log(blk.q)))
        lo_k = 0 if kb is None or b >= blk.upto else kb
        if kb is None:
            lo_k = int(math.ceil(math.log(blk.span / (b - blk.at)) / math.log(blk.q)))
        return [Point(float(blk.point(k))) for k in range(max(lo_k, 0), ka + 1)
                if a <= blk.point(k) <= b]
    if b >= blk.upto:
        return [blk, Point(blk.upto)]
    if kb is None:
        kb = int(math.ceil(math.log(blk.span / (b - blk.at)) / math.log(blk.q)))
    top = float(blk.point(kb))
    return [QTail(blk.q, blk.at, top), Point(top)]


def _richardson(values: list[np.ndarray], ratio: float) -> tuple[np.ndarray, np.ndarray]:
    """Neville table over steps h, h/ratio, ...; returns (estimate, stagnation)."""
    col = [np.asarray(v, dtype=float) for v in values]
    prev = col[-1]
    for j in range(1, len(values)):
        prev = col[-1]
        factor = ratio ** j - 1.0
        col = [col[i] + (col[i] - col[i - 1]) / factor for i in range(1, len(col))]
    return col[-1], np.abs(col[-1] - prev)


def dense_derivative(f, t: np.ndarray, lo: float, hi: float, h0: float, tol: float = 1e-8) -> np.ndarray:
    """Vectorised Δ-derivative at points of the dense stretch ``[lo, hi]``.

    Forward quotients where there is room, backward ones near the right end,
    four Richardson levels with halving steps.
    """
    t = np.asarray(t, dtype=float)
    length = hi - lo
    h0 = min(h0, length / 2.0)
    direction = np.where(hi - t >= h0, 1.0, -1.0)
    h = np.where(direction > 0, h0, np.minimum(h0, np.maximum(t - lo, 0.0)))
    # points too close to both ends of a short stretch fall back to the longer side
    h = np.where(h <= 0, np.maximum(hi - t, t - lo), h)
    direction = np.where((direction < 0) & (t - lo < hi - t), 1.0, direction)
    ft = np.asarray(f(t), dtype=float)
    quotients = []
    for level in range(4):
        step = h / 2.0 ** level
        quotients.append((np.asarray(f(t + direction * step), dtype=float) - ft) / (direction * step))
    est, stag = _richardson(quotients, 2.0)
    bad = stag > tol * np.maximum(1.0, np.abs(est))
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NonConvergent(f"derivative extrapolation stagnated at t={t[i]!r} (defect {stag[i]:.3g})")
    return est


def _tail_derivative(f, blk: QTail, h0: float | None, tol: float) -> float:
    k0 = 1
    if h0 is None:
        h0 = 1e-3 * blk.span
    while blk.span * blk.q ** (-k0) > h0 and k0 < 400:
        k0 += 1
    ft = float(f(blk.at))
    quotients = []
    for k in range(k0, k0 + 4):
        p = float(blk.point(k))
        quotients.append(np.array([(float(f(p)) - ft) / (p - blk.at)]))
    est, stag = _richardson(quotients, blk.q)
    if stag[0] > tol * max(1.0, abs(est[0])):
        raise NonConvergent(f"derivative extrapolation stagnated at t={blk.at!r}")
    return float(est[0])


@dataclass(frozen=True)
class Partition:
    """``a = t_0 < t_1 < ... < t_n = b`` with every ``t_i`` in ``scale``."""

    scale: TimeScale
    points: tuple[float, ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a partition needs at least two points")
        snapped = tuple(self.scale.snap(p) for p in self.points)
        if any(b <= a for a, b in zip(snapped, snapped[1:])):
            raise ValueError("partition points must be strictly increasing")
        object.__setattr__(self, "points", snapped)

    @property
    def a(self) -> float:
        return self.points[0]

    @property
    def b(self) -> float:
        return self.points[-1]

    @property
    def n(self) -> int:
        return len(self.points) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(np.asarray(self.points))

    def cells(self) -> Iterator[tuple[float, float]]:
        return zip(self.points, self.points[1:])

    def refine(self, extra: Sequence[float]) -> "Partition":
        pts = [p for p in (self.scale.snap(x) for x in extra) if self.a < p < self.b]
        return Partition(self.scale, tuple(sorted(set(self.points) | set(pts))))

    def is_refinement_of(self, other: "Partition") -> bool:
        return set(other.points) <= set(self.points)


def common_refinement(P1: Partition, P2: Partition) -> Partition:
    if P1.a != P2.a or P1.b != P2.b:
        raise MismatchedEndpoints(f"[{P1.a}, {P1.b}] vs [{P2.a}, {P2.b}]")
    if P1.scale != P2.scale:
        raise MismatchedEndpoints("partitions of different time scales")
    return Partition(P1.scale, tuple(sorted(set(P1.points) | set(P2.points))))


# module-level aliases matching the operation names ---------------------------

def restrict(T: TimeScale, a: float, b: float) -> TimeScale:
    return T.restrict(a, b)


def sigma(T: TimeScale, t: float) -> float:
    return T.sigma(t)


def rho(T: TimeScale, t: float) -> float:
    return T.rho(t)


def mu(T: TimeScale, t: float) -> float:
    return T.mu(t)


def classify(T: TimeScale, t: float) -> PointClass:
    return T.classify(t)


def make_partition(T: TimeScale, a: float, b: float, target_mesh: float) -> Partition:
    return T.make_partition(a, b, target_mesh)


def delta_derivative(T: TimeScale, f, t: float, h0: float | None = None, tol: float = 1e-8) -> float:
    return T.delta_derivative(f, t, h0, tol)
