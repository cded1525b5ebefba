"""Exception hierarchy shared by every tsint module."""

from __future__ import annotations

from typing import Any


class TsintError(Exception):
    """Base class for all library errors."""


# time scales -----------------------------------------------------------------

class PointNotInScale(TsintError, ValueError):
    def __init__(self, t: float, where: str = "time scale"):
        super().__init__(f"{t!r} is not a point of the {where}")
        self.t = t


class EndpointNotInScale(PointNotInScale):
    pass


class EmptyRestriction(TsintError, ValueError):
    pass


class MismatchedEndpoints(TsintError, ValueError):
    pass


class NonConvergent(TsintError, ArithmeticError):
    """Richardson extrapolation of a difference quotient stagnated."""


# expressions -----------------------------------------------------------------

class ExprSyntaxError(TsintError, ValueError):
    """Malformed expression or scale text. ``position`` is a 1-based column."""

    def __init__(self, message: str, position: int, expected: tuple[str, ...] = (), source: str = ""):
        self.position = position
        self.expected = tuple(expected)
        self.source = source
        detail = f"{message} at column {position}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class ArityError(TsintError, ValueError):
    pass


class DomainError(TsintError, ArithmeticError):
    pass


class UnknownConvexFn(TsintError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown convex function"


# integration -----------------------------------------------------------------

class NonMonotoneIntegrator(TsintError, ValueError):
    def __init__(self, message: str, witness: Any = None):
        super().__init__(message)
        self.witness = witness


class NoConvergence(TsintError, ArithmeticError):
    """Refinement budget exhausted; ``result`` holds the best enclosure reached."""

    def __init__(self, message: str, result: Any = None):
        super().__init__(message)
        self.result = result


class SelectionOutOfCell(TsintError, ValueError):
    pass


# inequalities ----------------------------------------------------------------

class PreconditionViolated(TsintError, ValueError):
    def __init__(self, message: str, witness: Any = None, defect: float | None = None):
        super().__init__(message)
        self.witness = witness
        self.defect = defect


class OrderingViolated(PreconditionViolated):
    pass


class GeneratorExhausted(TsintError, RuntimeError):
    pass
