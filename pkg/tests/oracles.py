"""Independent oracles and instance generators shared by the test modules."""

from __future__ import annotations

import math

import numpy as np

from tsint import parse, parse_scale
from tsint.fuzz import integrator_expr, random_scale


def finite_sum(points, f, g) -> float:
    """``Σ f(t_i) (g(t_{i+1}) - g(t_i))`` by scalar evaluation and ``fsum``."""
    return math.fsum(f(float(a)) * (g(float(b)) - g(float(a))) for a, b in zip(points, points[1:]))


def finite_double_sum(pts1, pts2, f, g1, g2) -> float:
    terms = []
    for a, b in zip(pts1, pts1[1:]):
        w1 = g1(float(b)) - g1(float(a))
        for c, d in zip(pts2, pts2[1:]):
            terms.append(f(float(a), float(c)) * w1 * (g2(float(d)) - g2(float(c))))
    return math.fsum(terms)


def discrete_points(T) -> list[float]:
    return [float(x) for x in T.grid_points(T.min, T.max, T.max - T.min + 1)]


def bivariate_expr(rng: np.random.Generator) -> str:
    c = [round(float(v), 3) for v in rng.uniform(-1, 1, 5)]
    return [
        f"{c[0]!r} + {c[1]!r}*t*s + {c[2]!r}*t^2 - {c[3]!r}*s",
        f"exp({c[0]!r}*t + {c[1]!r}*s) + {c[2]!r}",
        f"abs(t - s) + {c[3]!r}*t",
        f"{c[0]!r}*t^2*s + {c[4]!r}*s^2 + {c[1]!r}",
        f"min(t, s) + {c[2]!r}*max(t, {abs(c[3])!r})",
    ][int(rng.integers(5))]


def fubini_instance(seed: int):
    """A random ``(T1, T2, f, g1, g2, rect)`` on mixed scales."""
    rng = np.random.default_rng([seed, 0xF0B1])
    T1 = parse_scale(random_scale(rng, "mixed", 2))
    T2 = parse_scale(random_scale(rng, "mixed", 2))
    f = parse(bivariate_expr(rng), arity=2)
    g1, g2 = parse(integrator_expr(rng)), parse(integrator_expr(rng))
    return T1, T2, f, g1, g2, (T1.min, T1.max, T2.min, T2.max)
