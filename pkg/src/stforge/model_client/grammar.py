"""The ``<think>``/``<answer>`` output grammar: rendering and tolerant parsing."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Iterable, Optional

ANSWER_KINDS = ("points", "trajectory", "box", "option", "workflow", "action", "free_text")

_ANSWER = re.compile(r"<answer>(.*?)</answer>", re.S)
_WELL_FORMED = re.compile(
    r"^\s*<think>(?:(?!</?think>|</?answer>).)*</think>\s*"
    r"<answer>(?:(?!</?answer>|</?think>).)*</answer>\s*$",
    re.S,
)
_NUM = r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?"
_PAIR = re.compile(rf"^[\(\[]\s*({_NUM})\s*,\s*({_NUM})\s*[\)\]]$")
_OPTION = re.compile(r"^\(?([A-Z])\)?(?:[\s.:)].*)?$", re.S)
_ELLIPSIS = ("…", "...", "\\dots")


@dataclass(frozen=True)
class ParseResult:
    ok: bool
    kind: str
    payload: Any = None
    reason: str = ""

    def to_dict(self) -> dict:
        return {"ok": self.ok, "kind": self.kind, "payload": self.payload, "reason": self.reason}


def _fail(kind: str, reason: str) -> ParseResult:
    return ParseResult(False, kind, None, reason)


def _num(tok: str):
    if re.fullmatch(r"-?\d+", tok):
        return int(tok)
    return float(tok)


def _fmt(v) -> str:
    if isinstance(v, bool):
        raise TypeError("boolean is not a coordinate")
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        # keep the float type on the way back
        return f"{v:.1f}"
    return repr(v)


def _split_top(body: str) -> Optional[list]:
    """Split the inside of a bracketed list at depth-0 commas."""
    out, depth, cur = [], 0, []
    for ch in body:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
            if depth < 0:
                return None
        if ch == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        return None
    tail = "".join(cur).strip()
    if tail or out:
        out.append(tail)
    return out


def _strip_period(text: str) -> str:
    # model replies often close list answers with a sentence period: "[915, 408, 1109, 533]."
    s = text.strip()
    return s[:-1].rstrip() if s.endswith("].") else s


def _parse_pairs(text: str, kind: str) -> ParseResult:
    s = _strip_period(text)
    if not (s.startswith("[") and s.endswith("]")):
        return _fail(kind, "expected a bracketed list")
    parts = _split_top(s[1:-1])
    if parts is None:
        return _fail(kind, "unbalanced brackets")
    pts = []
    for p in parts:
        if p in _ELLIPSIS or p == "":
            continue
        m = _PAIR.match(p)
        if m is None:
            return _fail(kind, f"bad coordinate pair {p[:40]!r}")
        pts.append([_num(m.group(1)), _num(m.group(2))])
    if not pts:
        return _fail(kind, "no points")
    return ParseResult(True, kind, pts)


def _parse_box(text: str) -> ParseResult:
    s = _strip_period(text)
    m = re.fullmatch(rf"\[\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*\]", s)
    if m is None:
        return _fail("box", "expected [x1, y1, x2, y2]")
    return ParseResult(True, "box", [_num(g) for g in m.groups()])


def extract_answer(raw: str) -> Optional[str]:
    """Content of the last ``<answer>`` block, or None."""
    blocks = _ANSWER.findall(raw or "")
    return blocks[-1] if blocks else None


def is_well_formed(raw: str) -> bool:
    """Exactly one think block followed by exactly one answer block."""
    return bool(_WELL_FORMED.match(raw or ""))


def parse_payload(body: str, kind: str, vocabulary: Optional[Iterable[str]] = None) -> ParseResult:
    if kind in ("points", "trajectory"):
        return _parse_pairs(body, kind)
    if kind == "box":
        return _parse_box(body)
    if kind == "option":
        m = _OPTION.match(body.strip())
        if m is None:
            return _fail(kind, "expected an option letter")
        return ParseResult(True, kind, m.group(1))
    if kind == "workflow":
        try:
            graph = json.loads(body)
        except json.JSONDecodeError as exc:
            return _fail(kind, f"workflow is not valid JSON: {exc.msg}")
        if not (isinstance(graph, dict) and isinstance(graph.get("nodes"), list)
                and isinstance(graph.get("edges"), list)):
            return _fail(kind, "workflow needs 'nodes' and 'edges' lists")
        return ParseResult(True, kind, graph)
    if kind == "action":
        text = " ".join(body.split()).rstrip(".").rstrip()
        if not text:
            return _fail(kind, "empty action")
        if vocabulary is not None:
            lookup = {v.lower(): v for v in vocabulary}
            if text.lower() not in lookup:
                return _fail(kind, f"action {text!r} not in vocabulary")
            text = lookup[text.lower()]
        return ParseResult(True, kind, text)
    if kind == "free_text":
        return ParseResult(True, kind, body.strip())
    return _fail(kind, f"unknown answer kind {kind!r}")


def parse_answer(raw: str, kind: str, vocabulary: Optional[Iterable[str]] = None) -> ParseResult:
    """Parse the committed (last) answer block of ``raw`` as ``kind``; never raises."""
    try:
        body = extract_answer(raw if isinstance(raw, str) else "")
        if body is None:
            return _fail(kind, "no answer block")
        return parse_payload(body, kind, vocabulary)
    except Exception as exc:  # defensive: the contract is "classified failure, never an exception"
        return _fail(kind, f"parser error: {exc}")


def render_payload(kind: str, payload: Any) -> str:
    if kind == "points":
        return "[" + ", ".join(f"({_fmt(x)}, {_fmt(y)})" for x, y in payload) + "]"
    if kind == "trajectory":
        return "[" + ", ".join(f"[{_fmt(x)}, {_fmt(y)}]" for x, y in payload) + "]"
    if kind == "box":
        return "[" + ", ".join(_fmt(v) for v in payload) + "]"
    if kind == "option":
        return f"({payload})"
    if kind == "workflow":
        return json.dumps(payload, separators=(",", ":"), sort_keys=True)
    if kind in ("action", "free_text"):
        return str(payload)
    raise ValueError(f"unknown answer kind {kind!r}")


def render_answer(kind: str, payload: Any, think: Optional[str] = None) -> str:
    """Render a payload as model output; with ``think`` the output is fully well-formed."""
    ans = f"<answer>{render_payload(kind, payload)}</answer>"
    return ans if think is None else f"<think>{think}</think>{ans}"
