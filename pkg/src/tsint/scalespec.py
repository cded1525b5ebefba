"""Text and JSON forms of time scales.

Text grammar::

    scale := interval(a, b) | point(v) | points(v, ...) | integers(a, b)
           | hgrid(a, b, h) | qtail(q=..., at=..., upto=...) | union(scale, ...)

The JSON mirror is a list of component objects, e.g.
``[{"type": "interval", "lo": 0, "hi": 1}, {"type": "point", "value": 2}]``.
"""

from __future__ import annotations

import json
import re
from typing import Any

from .errors import ExprSyntaxError
from .timescale import Component, Interval, Point, QTail, TimeScale

_TOKEN = re.compile(
    r"\s*(?:(?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[(),=]))"
)

_ARITY = {"interval": 2, "point": 1, "integers": 2, "hgrid": 3, "qtail": 3}
_KEYWORDS = {
    "interval": ("lo", "hi"),
    "point": ("value",),
    "integers": ("lo", "hi"),
    "hgrid": ("lo", "hi", "h"),
    "qtail": ("q", "at", "upto"),
}


class _ScaleParser:
    def __init__(self, src: str):
        self.src = src
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(src):
            if src[pos:].strip() == "":
                break
            m = _TOKEN.match(src, pos)
            if m is None:
                col = pos + 1 + (len(src[pos:]) - len(src[pos:].lstrip()))
                raise ExprSyntaxError(f"unexpected character {src[col - 1]!r}", col, source=src)
            kind = m.lastgroup
            self.toks.append((kind, m.group(kind), m.start(kind) + 1))
            pos = m.end()
        self.toks.append(("end", "", len(src) + 1))
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def fail(self, expected):
        kind, text, col = self.peek()
        msg = "unexpected end of input" if kind == "end" else f"unexpected token {text!r}"
        raise ExprSyntaxError(msg, col, tuple(expected), self.src)

    def take(self, text: str):
        kind, tok, _ = self.peek()
        if kind == "op" and tok == text:
            self.i += 1
            return
        self.fail((repr(text),))

    def number(self) -> float:
        kind, text, _ = self.peek()
        if kind != "num":
            self.fail(("number",))
        self.i += 1
        return float(text)

    def parse(self) -> list[Component]:
        comps = self.item()
        if self.peek()[0] != "end":
            self.fail(("end of input",))
        return comps

    def item(self) -> list[Component]:
        kind, name, col = self.peek()
        if kind != "name" or name not in (*_ARITY, "points", "union"):
            self.fail(tuple(_ARITY) + ("points", "union"))
        self.i += 1
        self.take("(")
        if name == "union":
            comps = self.item()
            while self.peek()[1] == ",":
                self.i += 1
                comps += self.item()
            self.take(")")
            return comps
        if name == "points":
            vals = [self.number()]
            while self.peek()[1] == ",":
                self.i += 1
                vals.append(self.number())
            self.take(")")
            return [Point(v) for v in vals]
        args = self.arguments(name, col)
        try:
            if name == "interval":
                return [Interval(*args)]
            if name == "point":
                return [Point(*args)]
            if name == "integers":
                return list(TimeScale.integers(*args).components)
            if name == "hgrid":
                return list(TimeScale.hgrid(*args).components)
            return [QTail(*args)]
        except ValueError as exc:
            raise ExprSyntaxError(str(exc), col, source=self.src) from None

    def arguments(self, name: str, col: int) -> list[float]:
        keys = _KEYWORDS[name]
        values: dict[str, float] = {}
        position = 0
        while True:
            kind, text, kcol = self.peek()
            if kind == "name" and self.toks[self.i + 1][1] == "=":
                if text not in keys:
                    raise ExprSyntaxError(f"unknown argument {text!r} for {name}", kcol, keys, self.src)
                self.i += 2
                values[text] = self.number()
            else:
                if position >= len(keys):
                    self.fail((")",))
                values[keys[position]] = self.number()
            position += 1
            if self.peek()[1] == ",":
                self.i += 1
                continue
            self.take(")")
            break
        missing = [k for k in keys if k not in values]
        if missing:
            raise ExprSyntaxError(f"{name} is missing {', '.join(missing)}", col, tuple(missing), self.src)
        return [values[k] for k in keys]


def parse_scale(src: str) -> TimeScale:
    """Parse the text DSL, or the JSON mirror when the text starts with ``[`` or ``{``."""
    stripped = src.strip()
    if stripped.startswith(("[", "{")):
        return scale_from_json(json.loads(stripped))
    return TimeScale(_ScaleParser(src).parse())


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e16 else repr(float(v))


def format_scale(T: TimeScale) -> str:
    """Canonical text form; ``parse_scale(format_scale(T)) == T``."""
    uptos = {blk.upto for blk in T.components if isinstance(blk, QTail)}
    parts: list[str] = []
    run: list[float] = []

    def flush():
        if len(run) == 1:
            parts.append(f"point({_num(run[0])})")
        elif run:
            parts.append(f"points({','.join(_num(v) for v in run)})")
        run.clear()

    for blk in T.components:
        if isinstance(blk, Point):
            if blk.value not in uptos:
                run.append(blk.value)
            continue
        flush()
        if isinstance(blk, Interval):
            parts.append(f"interval({_num(blk.lo)},{_num(blk.hi)})")
        else:
            parts.append(f"qtail(q={_num(blk.q)},at={_num(blk.at)},upto={_num(blk.upto)})")
    flush()
    return parts[0] if len(parts) == 1 else f"union({','.join(parts)})"


def scale_to_json(T: TimeScale) -> list[dict[str, Any]]:
    out: list[dict[str, Any]] = []
    for blk in T.components:
        if isinstance(blk, Point):
            out.append({"type": "point", "value": blk.value})
        elif isinstance(blk, Interval):
            out.append({"type": "interval", "lo": blk.lo, "hi": blk.hi})
        else:
            out.append({"type": "qtail", "q": blk.q, "at": blk.at, "upto": blk.upto})
    return out


def scale_from_json(data) -> TimeScale:
    if isinstance(data, dict):
        data = data.get("components", data.get("union"))
    if not isinstance(data, list):
        raise ValueError("scale JSON must be a list of components")
    comps: list[Component] = []
    for item in data:
        kind = item.get("type")
        if kind == "point":
            comps.append(Point(float(item["value"])))
        elif kind == "interval":
            comps.append(Interval(float(item["lo"]), float(item["hi"])))
        elif kind == "qtail":
            comps.append(QTail(float(item["q"]), float(item["at"]), float(item["upto"])))
        else:
            raise ValueError(f"unknown component type {kind!r}")
    return TimeScale(comps)
