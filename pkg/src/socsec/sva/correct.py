"""Repair loop for generated assertions and binding to a concrete SoC."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from ..similarity import nearest_identifier
from ..spec_model import IpBlock, SocSpec
from .lexer import SvaSyntaxError, Token, tokenize
from .lint import LintFinding, apply_fixes, text_findings
from .parser import _RESERVED, parse_assertion

log = logging.getLogger(__name__)

MAX_PASSES = 10
SIGNAL_MATCH_MIN = 0.5

_LOW_NAME = re.compile(r"START|LOW|BASE|MIN|BEGIN", re.IGNORECASE)
_HIGH_NAME = re.compile(r"END|HIGH|LIMIT|MAX|TOP|LAST", re.IGNORECASE)
_ADDR_NAME = re.compile(r"ADDR|ADR", re.IGNORECASE)
_DECL_KW = {"localparam", "parameter"}
_COMPARE = {"<", "<=", ">", ">=", "==", "!=", "===", "!=="}
# bound to use when the address signal is on the left of the comparison
_LEFT_BOUND = {">=": "low", ">": "low", "==": "low", "===": "low", "!=": "low", "!==": "low",
               "<=": "high", "<": "high"}
_FLIP = {"low": "high", "high": "low"}


class UncorrectableError(ValueError):
    def __init__(self, msg: str, text: str, applied: list[LintFinding]):
        super().__init__(msg)
        self.text = text
        self.applied = applied


@dataclass(frozen=True)
class Binding:
    kind: str  # "address" or "signal"
    old: str
    new: str
    span: tuple[int, int]


@dataclass
class Correction:
    text: str
    applied: list[LintFinding] = field(default_factory=list)
    bindings: list[Binding] = field(default_factory=list)


def literal_value(value: str) -> int | None:
    m = re.fullmatch(r"(\d*)'[sS]?([hHdDbBoO])([0-9a-fA-F_]+)", value)
    if not m:
        return None
    base = {"h": 16, "d": 10, "b": 2, "o": 8}[m.group(2).lower()]
    try:
        return int(m.group(3).replace("_", ""), base)
    except ValueError:
        return None


def _bound(name: str | None, fallback: str) -> str:
    if name:
        if _LOW_NAME.search(name):
            return "low"
        if _HIGH_NAME.search(name):
            return "high"
    return fallback


def _address_edits(toks: list[Token], ip: IpBlock) -> list[tuple[Token, str]]:
    """(literal token, 'low'|'high') for address constants outside the IP's range."""
    edits: dict[int, tuple[Token, str]] = {}
    for i, tok in enumerate(toks):
        if tok.kind != "literal":
            continue
        value = literal_value(tok.value)
        if value is None or value in ip.address_range:
            continue
        prev = toks[i - 1] if i >= 1 else None
        prev2 = toks[i - 2] if i >= 2 else None
        nxt = toks[i + 1] if i + 1 < len(toks) else None
        nxt2 = toks[i + 2] if i + 2 < len(toks) else None
        # localparam NAME = literal;
        if prev is not None and prev.is_op("=") and prev2 is not None and prev2.kind == "ident":
            decl = any(t.is_kw(*_DECL_KW) for t in toks[max(0, i - 6):i - 2])
            if decl and _ADDR_NAME.search(prev2.value):
                edits[i] = (tok, _bound(prev2.value, "low"))
            continue
        # addr OP literal
        if (prev is not None and prev.kind == "op" and prev.value in _COMPARE
                and prev2 is not None and prev2.kind == "ident" and _ADDR_NAME.search(prev2.value)):
            edits[i] = (tok, _LEFT_BOUND[prev.value])
            continue
        # literal OP addr
        if (nxt is not None and nxt.kind == "op" and nxt.value in _COMPARE
                and nxt2 is not None and nxt2.kind == "ident" and _ADDR_NAME.search(nxt2.value)):
            side = _LEFT_BOUND[nxt.value]
            edits[i] = (tok, side if nxt.value in ("==", "===", "!=", "!==") else _FLIP[side])
    return [edits[k] for k in sorted(edits)]


def _declared(toks: list[Token], body: tuple[int, int]) -> set[str]:
    names = {t.value for i, t in enumerate(toks) if t.kind == "ident" and not body[0] <= i < body[1]}
    return names


def _property_region(toks: list[Token]) -> tuple[int, int]:
    start = next((i for i, t in enumerate(toks) if t.is_kw("property")), None)
    end = next((i for i, t in enumerate(toks) if t.is_kw("endproperty")), None)
    if start is None or end is None:
        return (0, 0)
    return (start + 3, end)  # skip 'property NAME ;'


def bind_to_spec(text: str, spec: SocSpec, ip: IpBlock) -> tuple[str, list[Binding]]:
    """Rewrite out-of-range address constants and unknown signal names for ``ip``."""
    toks = tokenize(text)[:-1]
    rng = ip.protected_range or ip.address_range
    replacements: list[tuple[Token, str, str]] = []
    for tok, side in _address_edits(toks, ip):
        value = rng.low if side == "low" else rng.high
        width = tok.value.split("'")[0] or "32"
        replacements.append((tok, f"{width}'h{value:08X}", "address"))

    known = list(dict.fromkeys([*ip.signals, *spec.bus_interface.signal_names]))
    lo, hi = _property_region(toks)
    declared = _declared(toks, (lo, hi)) | set(known)
    for i in range(lo, hi):
        tok = toks[i]
        if tok.kind != "ident" or tok.value in _RESERVED or tok.value in declared:
            continue
        if i + 1 < len(toks) and toks[i + 1].is_op("("):
            continue
        if i >= 1 and toks[i - 1].is_op("."):
            continue
        best, score = nearest_identifier(tok.value, known)
        if best is not None and score >= SIGNAL_MATCH_MIN:
            replacements.append((tok, best, "signal"))

    out = text
    bindings = []
    for tok, new, kind in sorted(replacements, key=lambda r: r[0].start, reverse=True):
        out = out[:tok.start] + new + out[tok.end:]
        bindings.append(Binding(kind, tok.value, new, (tok.start, tok.end)))
    bindings.reverse()
    return out, bindings


def correct_detailed(text: str, spec: SocSpec | None = None, target_ip: IpBlock | None = None) -> Correction:
    fixed = text
    applied: list[LintFinding] = []
    for _ in range(MAX_PASSES):
        step = [f for f in text_findings(fixed) if f.fix is not None]
        if not step:
            break
        new = apply_fixes(fixed, step)
        if new == fixed:
            break
        applied.extend(step)
        fixed = new
    bindings: list[Binding] = []
    if target_ip is not None and spec is not None:
        fixed, bindings = bind_to_spec(fixed, spec, target_ip)
        for b in bindings:
            log.info("bound %s %s -> %s", b.kind, b.old, b.new)
    try:
        parse_assertion(fixed)
    except SvaSyntaxError as exc:
        raise UncorrectableError(f"still unparseable after correction: {exc}", fixed, applied) from None
    if not applied and not bindings:
        return Correction(text)
    return Correction(fixed, applied, bindings)


def correct(text: str, spec: SocSpec | None = None,
            target_ip: IpBlock | None = None) -> tuple[str, list[LintFinding]]:
    result = correct_detailed(text, spec, target_ip)
    return result.text, result.applied
