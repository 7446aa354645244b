"""Runtime values shared by the expression engine, tables and the contract.

Numbers are exact decimals (20 significant digits, round-half-even) so that
threshold comparisons behave identically on every run. A lookup of an absent
variable yields Null rather than an error; comparisons that touch Null come
out Unknown in the three-valued logic.
"""

from __future__ import annotations

import decimal
import enum
from dataclasses import dataclass
from decimal import Decimal

from . import canon

DECIMAL_CONTEXT = decimal.Context(prec=20, rounding=decimal.ROUND_HALF_EVEN)


class Kind(enum.Enum):
    NUMBER = "number"
    TEXT = "text"
    BOOLEAN = "boolean"
    NULL = "null"


@dataclass(frozen=True)
class Value:
    kind: Kind
    raw: object = None

    def is_null(self) -> bool:
        return self.kind is Kind.NULL

    def __repr__(self):
        if self.kind is Kind.NULL:
            return "Value(null)"
        return f"Value({self.kind.value}:{self.raw!r})"


NULL = Value(Kind.NULL)
TRUE = Value(Kind.BOOLEAN, True)
FALSE = Value(Kind.BOOLEAN, False)


def number(x) -> Value:
    if isinstance(x, Decimal):
        d = x
    elif isinstance(x, int):
        d = Decimal(x)
    elif isinstance(x, float):
        # floats only enter via parsed JSON documents; go through repr to
        # keep the digits the author wrote
        d = Decimal(repr(x))
    else:
        d = Decimal(str(x))
    return Value(Kind.NUMBER, DECIMAL_CONTEXT.plus(d))


def text(s: str) -> Value:
    return Value(Kind.TEXT, s)


def boolean(b: bool) -> Value:
    return TRUE if b else FALSE


def from_json_scalar(x) -> Value:
    """Map a JSON scalar (from a document or API body) to a Value."""
    if x is None:
        return NULL
    if isinstance(x, bool):
        return boolean(x)
    if isinstance(x, (int, float)):
        return number(x)
    if isinstance(x, str):
        return text(x)
    raise TypeError(f"not a scalar: {type(x).__name__}")


def encode_value(v: Value):
    """Canonical-encodable form of a Value."""
    if v.kind is Kind.NULL:
        return {"type": "null"}
    if v.kind is Kind.NUMBER:
        return {"type": "number", "value": canon.decimal_str(v.raw)}
    if v.kind is Kind.TEXT:
        return {"type": "text", "value": v.raw}
    return {"type": "boolean", "value": v.raw}


def decode_value(obj) -> Value:
    t = obj["type"]
    if t == "null":
        return NULL
    if t == "number":
        return number(Decimal(obj["value"]))
    if t == "text":
        return text(obj["value"])
    if t == "boolean":
        return boolean(bool(obj["value"]))
    raise ValueError(f"unknown value type: {t}")


def plain(v: Value):
    """Plain JSON view for human-facing API responses (numbers as strings)."""
    if v.kind is Kind.NUMBER:
        return canon.decimal_str(v.raw)
    if v.kind is Kind.NULL:
        return None
    return v.raw


class TriBool(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"

    def __invert__(self) -> "TriBool":
        if self is TriBool.TRUE:
            return TriBool.FALSE
        if self is TriBool.FALSE:
            return TriBool.TRUE
        return TriBool.UNKNOWN


def tri_and(a: TriBool, b: TriBool) -> TriBool:
    if a is TriBool.FALSE or b is TriBool.FALSE:
        return TriBool.FALSE
    if a is TriBool.TRUE and b is TriBool.TRUE:
        return TriBool.TRUE
    return TriBool.UNKNOWN


def tri_or(a: TriBool, b: TriBool) -> TriBool:
    if a is TriBool.TRUE or b is TriBool.TRUE:
        return TriBool.TRUE
    if a is TriBool.FALSE and b is TriBool.FALSE:
        return TriBool.FALSE
    return TriBool.UNKNOWN


def tri_of_value(v: Value) -> TriBool:
    """Truth value of a Value in the three-valued logic."""
    if v.kind is Kind.BOOLEAN:
        return TriBool.TRUE if v.raw else TriBool.FALSE
    return TriBool.UNKNOWN


def value_of_tri(t: TriBool) -> Value:
    if t is TriBool.TRUE:
        return TRUE
    if t is TriBool.FALSE:
        return FALSE
    return NULL


class Context:
    """Immutable variable map; absent names read as Null."""

    __slots__ = ("_vars",)

    def __init__(self, mapping: dict[str, Value] | None = None):
        self._vars = dict(mapping) if mapping else {}

    def get(self, name: str) -> Value:
        return self._vars.get(name, NULL)

    def with_values(self, updates: dict[str, Value]) -> "Context":
        merged = dict(self._vars)
        merged.update(updates)
        return Context(merged)

    def names(self):
        return sorted(self._vars)

    def as_dict(self) -> dict[str, Value]:
        return dict(self._vars)

    def encode(self):
        return {k: encode_value(v) for k, v in self._vars.items()}

    @staticmethod
    def decode(obj) -> "Context":
        return Context({k: decode_value(v) for k, v in obj.items()})

    def __eq__(self, other):
        return isinstance(other, Context) and self._vars == other._vars

    def __repr__(self):
        return f"Context({self._vars!r})"
