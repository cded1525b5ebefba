"""Seeded random instances and fuzz campaigns for the inequality checks.

Trial ``i`` of a campaign with seed ``s`` draws from
``np.random.default_rng([s, i])``, so results do not depend on trial order
and any single trial can be replayed on its own.
"""

from __future__ import annotations

import json
import shlex
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .errors import GeneratorExhausted, PreconditionViolated
from .expr import parse
from .inequalities import CheckReport, InstanceSpec, canonical_id, run_check
from .integration import rs_integral
from .scalespec import parse_scale

__all__ = ["FuzzConfig", "fuzz", "generate", "random_scale", "instance_argv", "MAX_REJECTIONS"]

MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class FuzzConfig:
    """Generator controls.

    ``scales`` is ``mixed``, ``discrete`` or ``dense``. ``misorder`` declares the
    wrong ordering class for the Chebyshev checks (the run must then stop with a
    precondition error). ``weights="signed"`` lets ``p`` change sign in the
    majorisation checks, which their stated hypotheses do not forbid.
    """

    scales: str = "mixed"
    tol: float = 1e-8
    max_parts: int = 3
    misorder: bool = False
    weights: str = "nonnegative"

    def __post_init__(self):
        if self.scales not in ("mixed", "discrete", "dense"):
            raise ValueError("scales must be mixed, discrete or dense")
        if self.weights not in ("nonnegative", "signed"):
            raise ValueError("weights must be nonnegative or signed")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _c(rng: np.random.Generator, lo: float, hi: float) -> float:
    return round(float(rng.uniform(lo, hi)), 3)


def random_scale(rng: np.random.Generator, kind: str = "mixed", max_parts: int = 3) -> str:
    """A scale inside ``[0, ~5]`` built from 1..max_parts blocks, as DSL text."""
    blocks = {"mixed": ("interval", "points", "qtail", "hgrid"),
              "discrete": ("points", "hgrid"),
              "dense": ("interval",)}[kind]
    n = int(rng.integers(1, max_parts + 1))
    parts: list[str] = []
    cur = 0.0
    for i in range(n):
        kind_i = blocks[int(rng.integers(len(blocks)))]
        if i:
            cur = round(cur + _c(rng, 0.05, 0.5), 3)
        if kind_i == "interval":
            hi = round(cur + _c(rng, 0.2, 1.0), 3)
            parts.append(f"interval({cur!r},{hi!r})")
            cur = hi
        elif kind_i == "points":
            vals = [cur]
            for _ in range(int(rng.integers(1, 5))):
                vals.append(round(vals[-1] + _c(rng, 0.05, 0.6), 3))
            parts.append(f"points({','.join(repr(v) for v in vals)})")
            cur = vals[-1]
        elif kind_i == "hgrid":
            h = float(rng.choice([0.125, 0.25, 0.5]))
            m = int(rng.integers(2, 6))
            parts.append(f"hgrid({cur!r},{cur + m * h!r},{h!r})")
            cur = round(cur + m * h, 3)
        else:
            q = float(rng.choice([1.5, 2.0, 3.0]))
            upto = round(cur + _c(rng, 0.3, 1.0), 3)
            parts.append(f"qtail(q={q!r},at={cur!r},upto={upto!r})")
            cur = upto
    return parts[0] if len(parts) == 1 else f"union({','.join(parts)})"


# expression families (scales live in t >= 0) --------------------------------

def monotone_expr(rng: np.random.Generator, direction: int) -> str:
    c0, c1, c2 = _c(rng, -1, 1), _c(rng, 0.1, 2), _c(rng, 0.1, 1)
    body = [f"{c1!r}*t", f"{c1!r}*t^3", f"{c1!r}*exp({c2!r}*t)", f"{c1!r}*t + {c2!r}*t^2",
            f"{c1!r}*sqrt(t + {c2!r})", f"{c1!r}*max(t, {c2!r})"][int(rng.integers(6))]
    return f"{c0!r} + {body}" if direction >= 0 else f"{c0!r} - ({body})"


def continuous_expr(rng: np.random.Generator) -> str:
    c0, c1, c2 = _c(rng, -1, 1), _c(rng, -2, 2), _c(rng, -1, 1)
    return [f"{c0!r} + {c1!r}*t + {c2!r}*t^2", f"{c0!r} + {c1!r}*exp({c2!r}*t)",
            f"abs(t - {abs(c0)!r}) + {c1!r}*t", f"{c0!r} + {c1!r}*t^3 - {c2!r}*t",
            f"{c1!r}*min(t, {abs(c0) + 0.5!r}) + {c2!r}"][int(rng.integers(5))]


def positive_expr(rng: np.random.Generator) -> str:
    c0, c1, c2 = _c(rng, 0.1, 2), _c(rng, 0, 1), _c(rng, -1, 1)
    return [f"{c0!r} + {c1!r}*t^2", f"exp({c2!r}*t)", f"{c0!r} + abs(t - {c1!r})", "1",
            f"{c0!r} + {c1!r}*t"][int(rng.integers(5))]


def integrator_expr(rng: np.random.Generator) -> str:
    c = _c(rng, 0.1, 1.5)
    return ["t", "t^2", f"t + {c!r}*t^3", f"exp({c!r}*t)", f"2*t + abs(t - {c!r})"][int(rng.integers(5))]


def signed_expr(rng: np.random.Generator) -> str:
    return f"{_c(rng, -1, 1)!r} + {_c(rng, -1, 1)!r}*t"


_CONVEX = ("square", "exp", "abs", "xlogx", "neg_entropy", "power_1", "power_1.5", "power_2", "power_3")


def convex_and_arg(rng: np.random.Generator) -> tuple[str, str]:
    """A catalog name with an argument expression that stays inside its domain."""
    name = _CONVEX[int(rng.integers(len(_CONVEX)))]
    if name in ("square", "exp", "abs"):
        return name, continuous_expr(rng)
    if name == "neg_entropy":
        return name, f"1/({_c(rng, 1.2, 3)!r} + {_c(rng, 0, 1)!r}*t^2)"
    return name, positive_expr(rng)


# generators ------------------------------------------------------------------

def _base(rng: np.random.Generator, cfg: FuzzConfig) -> dict[str, Any]:
    return {"scale": random_scale(rng, cfg.scales, cfg.max_parts), "g": integrator_expr(rng),
            "p": positive_expr(rng), "tol": cfg.tol, "seed": int(rng.integers(2**31))}


def _shift(spec: dict[str, Any], y: str, d: str, extra: float = 0.0) -> str:
    """``x = y + d - c`` with ``c`` chosen so that ``∫p x Δg = ∫p y Δg + extra``."""
    T = parse_scale(spec["scale"])
    p, g = parse(spec["p"]), parse(spec["g"])
    Ip = rs_integral(T, p, g, tol=spec["tol"], rtol=1e-10).value
    Ipd = rs_integral(T, p * parse(d), g, tol=spec["tol"], rtol=1e-10).value
    if Ip == 0:
        raise PreconditionViolated("∫p Δg vanishes", None, 0.0)
    c = Ipd / Ip - extra
    return f"({y}) + ({d}) - ({c!r})"


def generate(inequality_id: str, rng: np.random.Generator, cfg: FuzzConfig = FuzzConfig()) -> InstanceSpec:
    """One random instance meant to satisfy the check's hypotheses."""
    iid = canonical_id(inequality_id)
    s = _base(rng, cfg)
    if iid in ("positivity", "monotone"):
        s["f"] = positive_expr(rng) if rng.random() < 0.8 else f"({continuous_expr(rng)})^2"
    elif iid == "subdifferential":
        s["F"] = convex_and_arg(rng)[0]
        s["samples"] = 200
        s["selection"] = ("mid", "left", "right")[int(rng.integers(3))]
    elif iid in ("theorem5",):
        name, x = convex_and_arg(rng)
        s["F"], s["x"] = name, x
        s["y"] = convex_and_arg_for(rng, name)
    elif iid == "jensen":
        s["F"], s["x"] = convex_and_arg(rng)
    elif iid == "reverse-jensen":
        s["F"], s["y"] = convex_and_arg(rng)
    elif iid in ("chebyshev", "chebyshev-kernel"):
        d1, d2 = (1 if rng.random() < 0.5 else -1), (1 if rng.random() < 0.5 else -1)
        s["f1"], s["f2"] = monotone_expr(rng, d1), monotone_expr(rng, d2)
        same = d1 == d2
        if cfg.misorder:
            same = not same
        s["order"] = "similar" if same else "opposite"
    elif iid == "winckler":
        f = positive_expr(rng)
        s["f"] = f if rng.random() < 0.8 else f"0 - ({f})"
    elif iid in ("majorisation-eq", "majorisation-le"):
        direction = 1 if rng.random() < 0.5 else -1
        if iid == "majorisation-eq":
            s["F"] = ("square", "exp", "abs", "power_2", "xlogx")[int(rng.integers(5))]
            extra = 0.0
        else:
            s["F"] = ("exp", "power_1", "power_1.5", "power_2")[int(rng.integers(4))]
            extra = _c(rng, 0, 0.5)
        if cfg.weights == "signed":
            s["p"] = signed_expr(rng)
            s["signed_p"] = True
        y = monotone_expr(rng, direction)
        if s["F"] in ("xlogx", "power_1", "power_1.5", "power_2"):
            y = f"2.5 + {y}" if direction > 0 else f"6 + {y}"
        s["y"] = y
        s["x"] = _shift(s, y, monotone_expr(rng, direction), extra)
    return InstanceSpec(**s)


def convex_and_arg_for(rng: np.random.Generator, name: str) -> str:
    if name in ("square", "exp", "abs"):
        return continuous_expr(rng)
    if name == "neg_entropy":
        return f"1/({_c(rng, 1.2, 3)!r} + {_c(rng, 0, 1)!r}*t^2)"
    return positive_expr(rng)


# campaigns -------------------------------------------------------------------

def instance_argv(inequality_id: str, spec: InstanceSpec) -> list[str]:
    """Command line that reruns one check on ``spec``."""
    argv = ["tsint", "check", canonical_id(inequality_id)]
    defaults = InstanceSpec(scale="")
    for key, value in spec.to_dict().items():
        if key != "scale" and value == getattr(defaults, key):
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
            continue
        argv += [flag, repr(value) if isinstance(value, float) else str(value)]
    return argv


def _trial(iid: str, seed: int, index: int, cfg: FuzzConfig) -> tuple[CheckReport, int]:
    rng = np.random.default_rng([seed, index])
    rejected = 0
    while True:
        spec = generate(iid, rng, cfg)
        try:
            return run_check(iid, spec), rejected
        except PreconditionViolated:
            if cfg.misorder and iid in ("chebyshev", "chebyshev-kernel"):
                raise
            rejected += 1
            if rejected >= MAX_REJECTIONS:
                raise GeneratorExhausted(f"{iid}: {MAX_REJECTIONS} consecutive instances failed their "
                                         f"preconditions (trial {index})") from None


def fuzz(inequality_id: str, trials: int, seed: int, config: FuzzConfig | None = None) -> dict[str, Any]:
    """Run ``trials`` random checks; report the worst margin and every violation."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    iid = canonical_id(inequality_id)
    cfg = config or FuzzConfig()
    worst: tuple[float, int] | None = None
    failing: list[dict[str, Any]] = []
    rejected = 0
    for i in range(trials):
        rep, rej = _trial(iid, seed, i, cfg)
        rejected += rej
        scaled = rep.margin / max(rep.slack, 1e-300)
        if worst is None or rep.margin < worst[0]:
            worst = (rep.margin, i)
        if not rep.passed:
            spec = InstanceSpec.from_dict(rep.instance)
            failing.append({"trial": i, "margin": rep.margin, "slack": rep.slack, "margin_over_slack": scaled,
                            "instance": rep.instance, "replay": shlex.join(instance_argv(iid, spec))})
    return {
        "inequality_id": iid,
        "trials": trials,
        "seed": seed,
        "config": cfg.to_dict(),
        "min_margin": worst[0],
        "min_margin_trial": worst[1],
        "violations": len(failing),
        "rejections": rejected,
        "failing": failing,
        "passed": not failing,
    }


def aggregate_json(result: dict[str, Any]) -> str:
    return json.dumps(result, sort_keys=True)


def replay_trial(inequality_id: str, seed: int, index: int, config: FuzzConfig | None = None) -> CheckReport:
    """Rerun one trial of a campaign on its own."""
    return _trial(canonical_id(inequality_id), seed, index, config or FuzzConfig())[0]

