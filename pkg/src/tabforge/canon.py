"""Canonical JSON encoding and content digests.

Every byte sequence that gets hashed, signed, or compared across runs goes
through :func:`encode`: UTF-8 JSON with lexicographically sorted keys and no
insignificant whitespace. Floats are rejected because their formatting is not
portable; decimals must be rendered to strings by the caller first.
"""

from __future__ import annotations

import hashlib
import json
import re
from decimal import Decimal

_CID_RE = re.compile(r"^sha256:[0-9a-f]{64}$")


class EncodingError(ValueError):
    pass


def _check(obj):
    if obj is None or isinstance(obj, (str, bool, int)):
        return
    if isinstance(obj, float):
        raise EncodingError("float values are not canonical; render them as strings")
    if isinstance(obj, Decimal):
        raise EncodingError("Decimal must be rendered with decimal_str() before encoding")
    if isinstance(obj, dict):
        for k, v in obj.items():
            if not isinstance(k, str):
                raise EncodingError(f"non-string map key: {k!r}")
            _check(v)
        return
    if isinstance(obj, (list, tuple)):
        for v in obj:
            _check(v)
        return
    raise EncodingError(f"unencodable value of type {type(obj).__name__}")


def encode(obj) -> bytes:
    """Canonical bytes for obj: sorted keys, compact separators, UTF-8."""
    _check(obj)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def decode(data: bytes):
    return json.loads(data.decode("utf-8"))


def digest(data: bytes) -> str:
    """Content digest rendered as "sha256:<64 hex>"."""
    return "sha256:" + hashlib.sha256(data).hexdigest()


def digest_of(obj) -> str:
    return digest(encode(obj))


def is_cid(text: str) -> bool:
    return isinstance(text, str) and _CID_RE.match(text) is not None


def decimal_str(d: Decimal) -> str:
    """Plain-form decimal string with no exponent and no trailing zeros."""
    if not d.is_finite():
        raise EncodingError(f"non-finite decimal: {d}")
    s = format(d.normalize(), "f")
    return "0" if s in ("-0", "0") else s
