"""Checks for the recurring defects in generated assertions.

Text rules (R1 R2 R4 R6 R7) work on the raw text with comments and strings
masked and carry a replacement. R3 and R5 need the parsed unit and are
advisory. R0 reports text that still does not parse once every fix is
applied.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .ast import AssertionUnit, BooleanProp
from .lexer import SvaSyntaxError, tokenize
from .parser import parse_assertion, split_top_level

RULES = ("R0", "R1", "R2", "R3", "R4", "R5", "R6", "R7")
ADVISORY = frozenset({"R0", "R3", "R5"})


@dataclass(frozen=True)
class LintFinding:
    rule_id: str
    span: tuple[int, int]
    message: str
    fix: str | None = None

    def __post_init__(self) -> None:
        if self.rule_id not in RULES:
            raise ValueError(f"unknown rule {self.rule_id}")
        if not 0 <= self.span[0] <= self.span[1]:
            raise ValueError("bad span")


@lru_cache(maxsize=1)
def keyword_fixes() -> tuple[tuple[str, str], ...]:
    text = resources.files("socsec.data").joinpath("sva_keyword_fixes.tsv").read_text(encoding="utf-8")
    pairs = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        bad, good = line.split("\t")
        pairs.append((bad.strip(), good.strip()))
    return tuple(pairs)


_MASKED = re.compile(r'//[^\n]*|/\*.*?\*/|"(?:[^"\\\n]|\\.)*"', re.DOTALL)


def mask(text: str) -> str:
    """Same-length copy with comments and string bodies blanked."""
    def blank(m: re.Match) -> str:
        s = m.group()
        if s.startswith('"'):
            return '"' + " " * (len(s) - 2) + '"'
        return re.sub(r"[^\n]", " ", s)
    return _MASKED.sub(blank, text)


def _close_paren(text: str, open_at: int) -> int | None:
    depth = 0
    for i in range(open_at, len(text)):
        if text[i] == "(":
            depth += 1
        elif text[i] == ")":
            depth -= 1
            if depth == 0:
                return i
    return None


def _r1(text: str, m: str) -> list[LintFinding]:
    out = []
    for bad, good in keyword_fixes():
        for hit in re.finditer(r"(?<![\w$])" + re.escape(bad) + r"(?![\w$])", m):
            out.append(LintFinding("R1", hit.span(), f"'{bad}' is not a SystemVerilog keyword; "
                                   f"did you mean '{good}'?", good))
    return out


_FUSED_DISABLE = re.compile(r"\bdisable(?:_iff|_if|\s+if)\b")


def _r2(text: str, m: str) -> list[LintFinding]:
    out = []
    for hit in _FUSED_DISABLE.finditer(m):
        start, end = hit.span()
        fix = "disable iff"
        j = end
        while j < len(m) and m[j].isspace():
            j += 1
        if j < len(m) and m[j] == "(":
            close = _close_paren(m, j)
            if close is not None:
                fix = f"disable iff ({text[j + 1:close].strip()})"
                end = close + 1
        out.append(LintFinding("R2", (start, end), f"malformed '{hit.group()}'; use 'disable iff'", fix))
    return out


_EDGE_PAREN = re.compile(r"\(\s*(?:posedge|negedge)\b")


def _r4(text: str, m: str) -> list[LintFinding]:
    out = []
    for hit in _EDGE_PAREN.finditer(m):
        j = hit.start() - 1
        while j >= 0 and m[j].isspace():
            j -= 1
        if j >= 0 and m[j] == "@":
            continue
        if j >= 0 and (m[j].isalnum() or m[j] in "_$"):
            continue  # posedge(clk) inside @(...) or a call
        out.append(LintFinding("R4", (hit.start(), hit.start() + 1),
                               "edge expression without '@'", "@("))
    return out


_PROPERTY_BLOCK = re.compile(r"\bproperty\b(.*?)\bendproperty\b", re.DOTALL)
_ELSE_INFO = re.compile(r"\belse\s*(\$info)\b")
_BODY_SEVERITY = re.compile(r"\$(?:info|display|warning)\b")


def _r6(text: str, m: str) -> list[LintFinding]:
    out = []
    for hit in _ELSE_INFO.finditer(m):
        out.append(LintFinding("R6", hit.span(1), "violation reported with '$info'; use '$error'",
                               "$error"))
    for block in _PROPERTY_BLOCK.finditer(m):
        for hit in _BODY_SEVERITY.finditer(m, block.start(1), block.end(1)):
            out.append(LintFinding("R6", hit.span(), f"'{hit.group()}' inside a property body; "
                                   "report violations with '$error' in the else branch", "$error"))
    return out


_NEGATED_ASSERT = re.compile(r"\bassert\s+property\s*(\(\s*!\s*([A-Za-z_]\w*)\s*\))")


def _r7(text: str, m: str) -> list[LintFinding]:
    return [LintFinding("R7", hit.span(1), f"asserting the negation of '{hit.group(2)}' "
                        "fires the message when the property holds", f"({hit.group(2)})")
            for hit in _NEGATED_ASSERT.finditer(m)]


def text_findings(text: str) -> list[LintFinding]:
    m = mask(text)
    found = _r1(text, m) + _r2(text, m) + _r4(text, m) + _r6(text, m) + _r7(text, m)
    return sorted(found, key=lambda f: (f.span, f.rule_id))


def apply_fixes(text: str, findings: list[LintFinding]) -> str:
    """Apply non-overlapping fixes, earliest first; overlapping later ones wait a pass."""
    out = []
    pos = 0
    for f in sorted((f for f in findings if f.fix is not None), key=lambda f: f.span):
        if f.span[0] < pos:
            continue
        out.append(text[pos:f.span[0]])
        out.append(f.fix)
        pos = f.span[1]
    out.append(text[pos:])
    return "".join(out)


# -- structural advisories ----------------------------------------------------------

def _literal(term: str) -> tuple[str, bool] | None:
    t = term.strip()
    while t.startswith("(") and t.endswith(")") and _close_paren(t, 0) == len(t) - 1:
        t = t[1:-1].strip()
    neg = False
    if t.startswith("!"):
        neg, t = True, t[1:].strip()
        while t.startswith("(") and t.endswith(")") and _close_paren(t, 0) == len(t) - 1:
            t = t[1:-1].strip()
    if re.fullmatch(r"[A-Za-z_]\w*", t):
        return t, not neg
    return None


def _antecedent_exprs(unit: AssertionUnit) -> list[str]:
    body = unit.property_body
    if isinstance(body, BooleanProp):
        return [body.expr]
    return [t.expr for t in body.antecedent]


def _conjuncts(expr: str) -> list[str]:
    out = []
    for part in split_top_level(expr, "&&"):
        lit = _literal(part)
        inner = part.strip()
        if lit is None and inner.startswith("(") and _close_paren(inner, 0) == len(inner) - 1:
            out.extend(_conjuncts(inner[1:-1]))
        else:
            out.append(part)
    return out


def _disjuncts(expr: str) -> list[str]:
    out = []
    for part in split_top_level(expr, "||"):
        inner = part.strip()
        if inner.startswith("(") and _close_paren(inner, 0) == len(inner) - 1 and _literal(inner) is None:
            out.extend(_disjuncts(inner[1:-1]))
        else:
            out.append(part)
    return out


def _span_of(pattern: str, m: str) -> tuple[int, int]:
    hit = re.search(pattern, m, re.DOTALL)
    return hit.span() if hit else (0, len(m))


def _r3(unit: AssertionUnit, m: str) -> list[LintFinding]:
    if not unit.disable_expr:
        return []
    guards = {lit for d in _disjuncts(unit.disable_expr) if (lit := _literal(d))}
    required = {lit for e in _antecedent_exprs(unit) for c in _conjuncts(e) if (lit := _literal(c))}
    clash = sorted(guards & required)
    if not clash:
        return []
    names = ", ".join(("" if pol else "!") + name for name, pol in clash)
    return [LintFinding("R3", _span_of(r"\bdisable\s+iff\s*\(", m),
                        f"disable condition {names} is also required by the property, "
                        "so the check is always disabled when it matters")]


_HANDSHAKE = {"ready", "rdy", "valid", "vld", "ack", "grant", "gnt", "done"}
_TRIGGER = {"start", "req", "request", "en", "enable", "strt", "go"}


def _parts(ident: str) -> set[str]:
    return {p for p in re.split(r"_+", ident.lower()) if p}


def _r5(unit: AssertionUnit, m: str) -> list[LintFinding]:
    idents = {t.value for e in _antecedent_exprs(unit) for t in tokenize(e) if t.kind == "ident"}
    parts = set().union(*(_parts(i) for i in idents)) if idents else set()
    if not parts & _HANDSHAKE or parts & _TRIGGER:
        return []
    return [LintFinding("R5", _span_of(r"\bproperty\b.*?\bendproperty\b", m),
                        "antecedent checks a handshake response without the start/request "
                        "event that should precede it")]


def lint(text: str) -> list[LintFinding]:
    findings = text_findings(text)
    fixed = text
    for _ in range(10):
        step = text_findings(fixed)
        if not any(f.fix is not None for f in step):
            break
        fixed = apply_fixes(fixed, step)
    try:
        unit = parse_assertion(fixed)
    except SvaSyntaxError as exc:
        return findings + [LintFinding("R0", (0, len(text)), f"unparseable: {exc}")]
    m = mask(text)
    return findings + _r3(unit, m) + _r5(unit, m)
