"""The q-scale Winckler example: engine vs. geometric series.

On ``T = {q^-k : k >= 1} ∪ {0, 1}`` with ``g(t) = t²`` the point ``q^-k`` carries
weight ``g(q^{-k+1}) - g(q^{-k}) = (q² - 1) q^{-2k}``, so

    ∫_0^1 t Δ(t²) = (q² - 1) Σ q^{-3k} = (q² - 1) / (q³ - 1).

For ``f ≡ 1`` the final Winckler-type display reads
``Σ q^{-2k} · Σ q^{-2k} <= 1 / (q² - 1)²`` and holds with equality.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Any

from .expr import parse
from .inequalities import InstanceSpec, check_winckler
from .integration import rs_integral
from .scalespec import parse_scale


def qscale_text(q: float) -> str:
    return f"union(qtail(q={q!r},at=0,upto=1),point(1))"


def series_tdt2(q: float) -> float:
    """``Σ_{k>=1} q^-k (q^{-2(k-1)} - q^{-2k})`` summed term by term until negligible."""
    terms = []
    k = 1
    while True:
        term = q ** -k * (q ** (-2 * (k - 1)) - q ** (-2 * k))
        terms.append(term)
        if term < 1e-18 * terms[0] or k > 100_000:
            break
        k += 1
    return math.fsum(terms)


def geometric_square_sum(q: float) -> float:
    """``Σ_{k>=1} q^{-2k}`` by direct summation."""
    terms = []
    k = 1
    while True:
        term = q ** (-2 * k)
        terms.append(term)
        if term < 1e-18 * terms[0] or k > 100_000:
            break
        k += 1
    return math.fsum(terms)


def example_qscale(q: float = 2.0, tol: float = 1e-10) -> dict[str, Any]:
    if not q > 1:
        raise ValueError("q must be > 1")
    T = parse_scale(qscale_text(q))
    engine = rs_integral(T, parse("t"), parse("t^2"), 0.0, 1.0, tol)
    series = series_tdt2(q)
    closed = (q * q - 1) / (q ** 3 - 1)
    printed_square = 1.0 / (q - 1) ** 2

    s = geometric_square_sum(q)
    bound = 1.0 / (q * q - 1) ** 2
    qf = Fraction(repr(q))
    exact_sum = 1 / (qf * qf - 1)
    exact_bound = 1 / (qf * qf - 1) ** 2
    winckler = check_winckler(InstanceSpec(scale=qscale_text(q), a=0.0, b=1.0, g="t^2", p="t", f="1", tol=tol))
    return {
        "q": q,
        "scale": qscale_text(q),
        "integral_t_dt2": {
            "engine": engine.to_dict(),
            "series": series,
            "closed_form": closed,
            "engine_minus_series": engine.value - series,
            "tail_bound": engine.tail_bound,
        },
        "square_of_integral": {
            "engine": engine.value ** 2,
            "printed_claim": printed_square,
            "agrees_with_printed_claim": abs(engine.value ** 2 - printed_square) <= 1e-9,
            "note": "printed claim 1/(q-1)^2 differs from the series value ((q^2-1)/(q^3-1))^2",
        },
        "final_display_f_equals_1": {
            "lhs": s * s,
            "rhs": bound,
            "lhs_exact": str(exact_sum * exact_sum),
            "rhs_exact": str(exact_bound),
            "equal_exactly": exact_sum * exact_sum == exact_bound,
            "winckler_margin": winckler.margin,
            "winckler_passed": winckler.passed,
        },
    }
