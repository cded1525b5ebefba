"""``tsint`` command line.

Every report carries the resolved ``config`` and a ``replay`` command line that
reproduces it. Exit codes: 0 ok, 2 invalid input, 3 no convergence,
4 precondition violated, 5 inequality failed, 6 fuzz found violations.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Sequence

from . import __version__
from .errors import (
    DomainError,
    ExprSyntaxError,
    GeneratorExhausted,
    NoConvergence,
    NonConvergent,
    PreconditionViolated,
    TsintError,
)
from .expr import parse
from .fuzz import FuzzConfig, fuzz
from .inequalities import INEQUALITIES, InstanceSpec, canonical_id, run_check
from .integration import iterated_integral, rs_double_integral, rs_integral, rs_integral_via_transition
from .qscale import example_qscale
from .scalespec import parse_scale
from .timescale import PointClass

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_CONVERGENCE = 3
EXIT_PRECONDITION = 4
EXIT_FAILED = 5
EXIT_FUZZ_VIOLATION = 6

COMMANDS = ("eval", "double", "iterated", "derive", "check", "fuzz", "example-qscale")


@dataclass(frozen=True)
class RunConfig:
    """Resolved inputs of one run; ``to_argv`` turns it back into a command line."""

    command: str
    inequality: str | None = None
    scale: str | None = None
    scale2: str | None = None
    f: str | None = None
    g: str = "t"
    g2: str | None = None
    p: str = "1"
    x: str | None = None
    y: str | None = None
    f1: str | None = None
    f2: str | None = None
    F: str | None = None
    selection: str = "mid"
    order: str | None = None
    a: float | None = None
    b: float | None = None
    c: float | None = None
    d: float | None = None
    t: float | None = None
    route: str = "rs"
    tol: float = 1e-8
    seed: int = 0
    trials: int = 100
    samples: int = 1000
    q: float = 2.0
    scales: str = "mixed"
    weights: str = "nonnegative"
    misorder: bool = False
    signed_p: bool = False
    format: str = "json"

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.format not in ("json", "text"):
            raise ValueError("format must be json or text")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.command in ("eval", "double", "iterated", "derive", "check") and not self.scale:
            raise ValueError(f"{self.command} needs --scale")
        if self.command in ("eval", "double", "iterated", "derive") and not self.f:
            raise ValueError(f"{self.command} needs --f")
        if self.command in ("check", "fuzz"):
            if not self.inequality:
                raise ValueError(f"{self.command} needs an inequality id")
            object.__setattr__(self, "inequality", canonical_id(self.inequality))
        if self.command == "iterated" and (self.order or "ts") not in ("ts", "st"):
            raise ValueError("iterated --order must be ts or st")
        if self.command == "fuzz" and self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.command == "eval" and self.route not in ("rs", "transition"):
            raise ValueError("route must be rs or transition")
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    def to_argv(self) -> list[str]:
        argv = [self.command]
        if self.inequality is not None:
            argv.append(self.inequality)
        defaults = RunConfig(command=self.command)
        for fld in fields(self):
            if fld.name in ("command", "inequality"):
                continue
            value = getattr(self, fld.name)
            if value == getattr(defaults, fld.name):
                continue
            flag = "--" + fld.name.replace("_", "-")
            if isinstance(value, bool):
                argv.append(flag)
            else:
                argv += [flag, repr(value) if isinstance(value, float) else str(value)]
        return argv

    def replay(self) -> str:
        return shlex.join(["tsint", *self.to_argv()])


# argument parsing ------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=1e-8, help="absolute tolerance (default 1e-8)")
    p.add_argument("--format", choices=("json", "text"), default="json")


def _add_scale(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--scale", required=required, help='time scale, e.g. "union(interval(0,1),points(2,3))"')
    p.add_argument("--a", type=float, help="left endpoint (default min T)")
    p.add_argument("--b", type=float, help="right endpoint (default max T)")


def _add_instance(p: argparse.ArgumentParser) -> None:
    p.add_argument("--g", default="t", help="non-decreasing integrator (default t)")
    p.add_argument("--p", default="1", help="weight (default 1)")
    for name in ("f", "x", "y", "f1", "f2"):
        p.add_argument(f"--{name}")
    p.add_argument("--F", help="convex catalog function: square, exp, abs, xlogx, neg_entropy, power_<p>")
    p.add_argument("--selection", choices=("mid", "left", "right"), default="mid")
    p.add_argument("--order", choices=("similar", "opposite"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--signed-p", action="store_true", help="allow p to change sign (majorisation only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsint", description="Riemann–Stieltjes Δ-integrals on time scales")
    parser.add_argument("--version", action="version", version=f"tsint {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="∫_a^b f Δg")
    _add_scale(p)
    p.add_argument("--f", required=True)
    p.add_argument("--g", default="t")
    p.add_argument("--route", choices=("rs", "transition"), default="rs",
                   help="rs: Stieltjes sums; transition: ∫ f g^Δ Δt")
    _add_common(p)

    for name, helptext in (("double", "double Δ-integral of f(t,s)"), ("iterated", "iterated Δ-integral")):
        p = sub.add_parser(name, help=helptext)
        _add_scale(p)
        p.add_argument("--scale2", help="time scale for s (default: --scale)")
        p.add_argument("--c", type=float)
        p.add_argument("--d", type=float)
        p.add_argument("--f", required=True, help="expression in t and s")
        p.add_argument("--g", default="t")
        p.add_argument("--g2", help="integrator in s (default: --g)")
        if name == "iterated":
            p.add_argument("--order", choices=("ts", "st"), default="ts", help="outer then inner variable")
        _add_common(p)

    p = sub.add_parser("derive", help="Δ-derivative f^Δ(t)")
    p.add_argument("--scale", required=True)
    p.add_argument("--f", required=True)
    p.add_argument("--t", type=float, required=True)
    _add_common(p)

    p = sub.add_parser("check", help="check one inequality instance")
    p.add_argument("inequality", help=", ".join(INEQUALITIES))
    _add_scale(p)
    _add_instance(p)
    _add_common(p)

    p = sub.add_parser("fuzz", help="seeded random campaign for one inequality")
    p.add_argument("inequality", help=", ".join(INEQUALITIES))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scales", choices=("mixed", "discrete", "dense"), default="mixed")
    p.add_argument("--weights", choices=("nonnegative", "signed"), default="nonnegative")
    p.add_argument("--misorder", action="store_true", help="declare the wrong ordering class (chebyshev)")
    _add_common(p)

    p = sub.add_parser("example-qscale", help="q-scale example: engine vs series")
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--format", choices=("json", "text"), default="json")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    data = {k: v for k, v in vars(ns).items() if k in {f.name for f in fields(RunConfig)}}
    cfg = RunConfig(**data)
    if cfg.command == "example-qscale" and "tol" not in data:
        cfg = replace(cfg, tol=1e-10)
    return cfg.validate()


# commands --------------------------------------------------------------------

def _instance(cfg: RunConfig) -> InstanceSpec:
    return InstanceSpec(scale=cfg.scale, a=cfg.a, b=cfg.b, g=cfg.g, p=cfg.p, f=cfg.f, x=cfg.x, y=cfg.y,
                        f1=cfg.f1, f2=cfg.f2, F=cfg.F, selection=cfg.selection, order=cfg.order, tol=cfg.tol,
                        seed=cfg.seed, samples=cfg.samples, signed_p=cfg.signed_p)


def _rect(cfg: RunConfig):
    T1 = parse_scale(cfg.scale)
    T2 = parse_scale(cfg.scale2) if cfg.scale2 else T1
    return T1, T2, (cfg.a if cfg.a is not None else T1.min, cfg.b if cfg.b is not None else T1.max,
                    cfg.c if cfg.c is not None else T2.min, cfg.d if cfg.d is not None else T2.max)


def _class_names(c: PointClass) -> list[str]:
    base = (PointClass.LEFT_DENSE, PointClass.LEFT_SCATTERED, PointClass.RIGHT_DENSE, PointClass.RIGHT_SCATTERED)
    return [m.name.lower() for m in base if m in c]


def execute(cfg: RunConfig) -> tuple[int, dict[str, Any]]:
    """Run a validated config; returns ``(exit_code, report)`` or raises a library error."""
    if cfg.command == "eval":
        T = parse_scale(cfg.scale)
        route = rs_integral if cfg.route == "rs" else rs_integral_via_transition
        return EXIT_OK, {"result": route(T, parse(cfg.f), parse(cfg.g), cfg.a, cfg.b, cfg.tol).to_dict()}
    if cfg.command in ("double", "iterated"):
        T1, T2, rect = _rect(cfg)
        f = parse(cfg.f, arity=2)
        g1, g2 = parse(cfg.g), parse(cfg.g2 or cfg.g)
        if cfg.command == "double":
            res = rs_double_integral(T1, T2, f, g1, g2, rect, cfg.tol)
        else:
            res = iterated_integral(T1, T2, f, g1, g2, rect, cfg.order or "ts", cfg.tol)
        return EXIT_OK, {"result": res.to_dict()}
    if cfg.command == "derive":
        T = parse_scale(cfg.scale)
        f = parse(cfg.f)
        t = T.snap(cfg.t)
        return EXIT_OK, {"result": {"t": t, "derivative": T.delta_derivative(f, t), "sigma": T.sigma(t),
                                    "mu": T.mu(t), "class": _class_names(T.classify(t))}}
    if cfg.command == "check":
        rep = run_check(cfg.inequality, _instance(cfg))
        return (EXIT_OK if rep.passed else EXIT_FAILED), {"report": rep.to_dict()}
    if cfg.command == "fuzz":
        agg = fuzz(cfg.inequality, cfg.trials, cfg.seed,
                   FuzzConfig(scales=cfg.scales, tol=cfg.tol, misorder=cfg.misorder, weights=cfg.weights))
        return (EXIT_OK if agg["passed"] else EXIT_FUZZ_VIOLATION), {"aggregate": agg}
    return EXIT_OK, {"result": example_qscale(cfg.q, cfg.tol)}


def _error_code(exc: BaseException, cfg: RunConfig | None) -> int:
    if isinstance(exc, (NoConvergence, NonConvergent)):
        return EXIT_NO_CONVERGENCE
    if isinstance(exc, (PreconditionViolated, GeneratorExhausted)):
        return EXIT_PRECONDITION
    if isinstance(exc, DomainError) and cfg is not None and cfg.command in ("check", "fuzz"):
        return EXIT_PRECONDITION
    return EXIT_INVALID


def _error_report(exc: BaseException) -> dict[str, Any]:
    out: dict[str, Any] = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ExprSyntaxError):
        out["position"] = exc.position
    if isinstance(exc, PreconditionViolated):
        out["witness"] = exc.witness
        out["defect"] = exc.defect
    if isinstance(exc, NoConvergence) and exc.result is not None:
        out["partial_result"] = exc.result.to_dict()
    return out


def _flatten(prefix: str, value: Any, rows: list[tuple[str, str]]) -> None:
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], rows)
    elif isinstance(value, list) and value and isinstance(value[0], dict):
        for i, item in enumerate(value):
            _flatten(f"{prefix}[{i}]", item, rows)
    else:
        rows.append((prefix, json.dumps(value) if not isinstance(value, str) else value))


def render(report: dict[str, Any], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, sort_keys=True, ensure_ascii=False, default=_jsonable)
    rows: list[tuple[str, str]] = []
    _flatten("", json.loads(json.dumps(report, default=_jsonable)), rows)
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, tuple):
        return list(obj)
    if hasattr(obj, "item"):
        return obj.item()
    return str(obj)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg: RunConfig | None = None
    fmt = getattr(ns, "format", "json")
    try:
        cfg = config_from_args(ns)
        code, body = execute(cfg)
    except (TsintError, ValueError, ArithmeticError, KeyError) as exc:
        code = _error_code(exc, cfg)
        body = {"error": _error_report(exc)}
    report = {"exit_code": code, **body}
    if cfg is not None:
        report["config"] = cfg.to_dict()
        report["replay"] = cfg.replay()
    print(render(report, fmt))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
