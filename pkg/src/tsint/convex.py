"""Catalog of convex functions with explicit subgradient selections."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import UnknownConvexFn
from .expr import ExprFn, Sign, Var, parse

SELECTIONS = ("mid", "left", "right")


@dataclass(frozen=True)
class ConvexFn:
    """Convex ``F`` on ``domain`` plus a non-decreasing selection ``phi`` of its subdifferential.

    ``domain`` is ``(lo, hi, lo_open, hi_open)``; infinite ends are open.
    ``nondecreasing`` is ``True``/``False`` when known, ``None`` otherwise.
    """

    name: str
    F: ExprFn
    phi: ExprFn
    domain: tuple[float, float, bool, bool]
    nondecreasing: bool | None
    left_derivative: Callable = field(repr=False, compare=False)
    right_derivative: Callable = field(repr=False, compare=False)
    selection: str = "mid"
    kinks: tuple[float, ...] = ()

    def contains(self, x) -> np.ndarray:
        lo, hi, lo_open, hi_open = self.domain
        x = np.asarray(x, dtype=float)
        ok_lo = x > lo if lo_open else x >= lo
        ok_hi = x < hi if hi_open else x <= hi
        return ok_lo & ok_hi

    def sample_box(self) -> tuple[float, float]:
        """A finite sub-box of the domain used for random sampling."""
        lo, hi, lo_open, hi_open = self.domain
        if math.isinf(lo) and math.isinf(hi):
            return -10.0, 10.0
        if math.isinf(hi):
            return (lo + 1e-6 if lo_open else lo), lo + 10.0
        return (lo + 1e-6 if lo_open else lo), (hi - 1e-6 if hi_open else hi)


_REAL = (-math.inf, math.inf, True, True)


def _abs(selection: str) -> ConvexFn:
    at_zero = {"mid": 0.0, "left": -1.0, "right": 1.0}[selection]
    return ConvexFn(
        name="abs",
        F=parse("abs(t)"),
        phi=ExprFn(Sign(Var("t"), at_zero)),
        domain=_REAL,
        nondecreasing=False,
        left_derivative=lambda x: np.where(np.asarray(x) > 0, 1.0, -1.0),
        right_derivative=lambda x: np.where(np.asarray(x) >= 0, 1.0, -1.0),
        selection=selection,
        kinks=(0.0,),
    )


def _smooth(name: str, F: str, phi: str, domain, nondecreasing) -> ConvexFn:
    F_fn = parse(F)
    phi_fn = parse(phi)
    return ConvexFn(name, F_fn, phi_fn, domain, nondecreasing, phi_fn, phi_fn)


def convex_catalog(name: str, selection: str = "mid") -> ConvexFn:
    """Look up a catalog function.

    Names: ``square``, ``exp``, ``abs``, ``xlogx``, ``neg_entropy`` and
    ``power_p`` for ``p >= 1`` (written e.g. ``power_1.5`` or ``power_p=3``).
    At a kink ``selection`` picks the midpoint of the one-sided derivatives
    (default) or either end.
    """
    if selection not in SELECTIONS:
        raise ValueError(f"selection must be one of {SELECTIONS}")
    key = name.strip().lower()
    if key == "square":
        return _smooth("square", "t^2", "2*t", _REAL, False)
    if key == "exp":
        return _smooth("exp", "exp(t)", "exp(t)", _REAL, True)
    if key == "abs":
        return _abs(selection)
    if key == "xlogx":
        return _smooth("xlogx", "t*ln(t)", "ln(t) + 1", (0.0, math.inf, True, True), False)
    if key == "neg_entropy":
        return _smooth(
            "neg_entropy", "t*ln(t) + (1 - t)*ln(1 - t)", "ln(t) - ln(1 - t)", (0.0, 1.0, True, True), False
        )
    if key.startswith("power"):
        rest = key[len("power"):].lstrip("_").removeprefix("p").lstrip("=_")
        try:
            p = float(rest)
        except ValueError:
            raise UnknownConvexFn(f"cannot read exponent from {name!r}") from None
        if not p >= 1 or math.isinf(p):
            raise UnknownConvexFn(f"power_p needs a finite p >= 1, got {p}")
        F = parse("t") if p == 1 else parse(f"t^{p!r}")
        phi = parse("1") if p == 1 else parse(f"{p!r}*t^{p - 1!r}")
        return ConvexFn(f"power_{p:g}", F, phi, (0.0, math.inf, False, True), True, phi, phi)
    raise UnknownConvexFn(f"unknown convex function {name!r}")


def check_subgradient(C: ConvexFn, samples: int, seed: int) -> dict:
    """Evaluate ``F(x) - F(y) - (x - y) phi(y)`` at random pairs; report the minimum."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = C.sample_box()
    x = rng.uniform(lo, hi, samples)
    y = rng.uniform(lo, hi, samples)
    if C.kinks:
        # make sure the kinks themselves are exercised
        y[: min(len(C.kinks), samples)] = C.kinks[: min(len(C.kinks), samples)]
    margin = C.F(x) - C.F(y) - (x - y) * C.phi(y)
    i = int(np.argmin(margin))
    return {
        "convex_fn": C.name,
        "selection": C.selection,
        "samples": samples,
        "seed": seed,
        "min_margin": float(margin[i]),
        "witness": {"x": float(x[i]), "y": float(y[i])},
        "passed": bool(margin[i] >= -1e-12),
    }

