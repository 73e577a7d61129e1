"""Strict line-format parsing of chat-model responses."""

from __future__ import annotations

import re
from typing import Optional, Sequence


class ParseError(ValueError):
    """A response that does not fit the requested line format.

    ``kind`` is one of ``not_text``, ``wrong_line_count``, ``key_mismatch``,
    ``duplicate_key`` or ``empty_value``.
    """

    def __init__(self, kind: str, message: str, count: Optional[int] = None, raw: Optional[str] = None):
        super().__init__(message)
        self.kind = kind
        self.count = count
        self.raw = raw


_BULLET = re.compile(r"^(?:[-*•>]+|\d{1,2}[.)])\s+")
_FENCE = re.compile(r"^(?:```|~~~)")
_LEAD_WRAPPER = re.compile(
    r"^(?:sure|certainly|of course|okay|ok|absolutely|great|happy to|here(?:'s| is| are)|below (?:is|are)"
    r"|based on|i have|i've)\b",
    re.IGNORECASE,
)
_TRAIL_WRAPPER = re.compile(
    r"^(?:let me know|i hope|hope this|feel free|please note|note:|if you need|these lines|this summary)",
    re.IGNORECASE,
)


def _clean_line(line: str) -> str:
    line = line.strip().replace("**", "").replace("__", "")
    line = _BULLET.sub("", line)
    return line.strip().strip("`").strip()


def _label(line: str) -> Optional[str]:
    if ":" not in line:
        return None
    return " ".join(line.split(":", 1)[0].lower().split())


def _matches(label: Optional[str], key: str) -> bool:
    if label is None:
        return False
    key = " ".join(key.lower().split())
    return label == key or label.startswith(key + " ")


def parse_lines(response, expected: int, keys: Optional[Sequence[str]] = None) -> list:
    """Split a chat response into exactly ``expected`` field values.

    Blank lines, code fences, list bullets and bold markers are ignored.
    With ``keys``, lines before the first keyed line and after the last are
    treated as wrapper prose and dropped; every remaining line must read
    ``<key>: <value>`` in order and the values are returned. Without keys,
    leading pleasantries ("Sure! Here you go:") and trailing sign-offs are
    dropped and whole lines are returned.
    """
    if isinstance(response, (bytes, bytearray)):
        response = bytes(response).decode("utf-8", errors="replace")
    if not isinstance(response, str):
        raise ParseError("not_text", f"response is {type(response).__name__}, not text")
    raw = response
    lines = [_clean_line(l) for l in response.splitlines()]
    lines = [l for l in lines if l and not _FENCE.match(l)]
    if keys:
        keyed = [i for i, l in enumerate(lines) if any(_matches(_label(l), k) for k in keys)]
        if keyed:
            lines = lines[keyed[0]:keyed[-1] + 1]
    else:
        while lines and (_LEAD_WRAPPER.match(lines[0]) or (lines[0].endswith(":") and len(lines) > expected)):
            lines.pop(0)
        while lines and _TRAIL_WRAPPER.match(lines[-1]) and len(lines) > expected:
            lines.pop()
    if len(lines) != expected:
        raise ParseError("wrong_line_count", f"expected {expected} lines, got {len(lines)}", len(lines), raw)
    if not keys:
        return lines
    if len(keys) != expected:
        raise ValueError("keys must have one entry per expected line")
    seen = set()
    values = []
    for line, key in zip(lines, keys):
        label = _label(line)
        hit = [k for k in keys if _matches(label, k)]
        # the longest matching key is the one meant ("AI/ML technology" over "AI")
        hit.sort(key=len, reverse=True)
        if hit and hit[0] in seen:
            raise ParseError("duplicate_key", f"key {hit[0]!r} appears more than once", len(lines), raw)
        if not _matches(label, key) or (hit and hit[0] != key):
            raise ParseError("key_mismatch", f"expected a line starting with {key!r}, got {line[:60]!r}",
                             len(lines), raw)
        seen.add(key)
        value = line.split(":", 1)[1].strip()
        if not value:
            raise ParseError("empty_value", f"{key!r} has no value", len(lines), raw)
        values.append(value)
    return values
