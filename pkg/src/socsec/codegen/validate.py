"""Self-check for generated Verilog: structure, synthesizable subset, declarations."""
from __future__ import annotations

import re
from dataclasses import dataclass

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<literal>\d*\s*'[sS]?[bBoOdDhH]\s*[0-9a-fA-FxXzZ_?]+)
  | (?P<number>\d[\d_]*)
  | (?P<sysid>\$[A-Za-z_]\w*)
  | (?P<ident>[A-Za-z_][\w$]*|\\\S+)
  | (?P<string>"(?:\\.|[^"\\])*")
  | (?P<op>.)
""", re.VERBOSE | re.DOTALL)

KEYWORDS = {
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "assign", "always",
    "begin", "end", "if", "else", "posedge", "negedge", "or", "case", "endcase", "default",
    "localparam", "parameter", "signed", "integer",
}
FORBIDDEN = {"initial", "forever", "fork", "join", "wait", "force", "release", "deassign",
             "task", "function", "specify"}


@dataclass(frozen=True)
class RtlFinding:
    rule: str  # structure / subset / undeclared
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: [{self.rule}] {self.message}"


@dataclass(frozen=True)
class _Tok:
    kind: str
    value: str
    line: int


def _tokens(text: str) -> list[_Tok]:
    out = []
    line = 1
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            out.append(_Tok(kind, value, line))
        line += value.count("\n")
    return out


def validate_text(text: str) -> list[RtlFinding]:
    toks = _tokens(text)
    findings: list[RtlFinding] = []

    depth = 0
    modules = 0
    for t in toks:
        if t.kind == "ident" and t.value == "begin":
            depth += 1
        elif t.kind == "ident" and t.value == "end":
            depth -= 1
            if depth < 0:
                findings.append(RtlFinding("structure", t.line, "'end' without 'begin'"))
                depth = 0
        elif t.kind == "ident" and t.value == "module":
            if modules:
                findings.append(RtlFinding("structure", t.line, "nested or repeated module"))
            modules += 1
        elif t.kind == "ident" and t.value == "endmodule":
            if not modules:
                findings.append(RtlFinding("structure", t.line, "'endmodule' without 'module'"))
            modules = max(modules - 1, 0)
        elif t.kind == "ident" and t.value in FORBIDDEN:
            findings.append(RtlFinding("subset", t.line, f"'{t.value}' is outside the synthesizable subset"))
        elif t.kind == "sysid":
            findings.append(RtlFinding("subset", t.line, f"system task {t.value} is not allowed"))
        elif t.kind == "op" and t.value == "#":
            findings.append(RtlFinding("subset", t.line, "delay control '#' is not allowed"))
    if depth:
        findings.append(RtlFinding("structure", toks[-1].line if toks else 1, f"{depth} unclosed 'begin'"))
    if modules:
        findings.append(RtlFinding("structure", toks[-1].line if toks else 1, "missing 'endmodule'"))
    if not any(t.kind == "ident" and t.value == "module" for t in toks):
        findings.append(RtlFinding("structure", 1, "no module found"))

    findings += _undeclared(toks)
    return findings


def _undeclared(toks: list[_Tok]) -> list[RtlFinding]:
    declared: set[str] = set()
    findings = []
    decl = False       # inside a declaration list
    bracket = 0        # inside [msb:lsb]
    paren = 0
    stmt_start = True
    i = 0
    while i < len(toks):
        t = toks[i]
        nxt = toks[i + 1] if i + 1 < len(toks) else None
        i += 1
        if t.kind == "op":
            if t.value == "[":
                bracket += 1
            elif t.value == "]":
                bracket -= 1
            elif t.value == "(":
                paren += 1
            elif t.value == ")":
                paren -= 1
                if paren == 0:
                    decl = False
            elif t.value == ";":
                decl = False
                stmt_start = True
                continue
            elif t.value == "=" and decl:
                decl = False  # initializer of a localparam
            stmt_start = False
            continue
        if t.kind != "ident":
            stmt_start = False
            continue
        v = t.value
        if v in ("input", "output", "inout", "wire", "reg", "localparam", "parameter", "integer"):
            decl = True
            stmt_start = False
            continue
        if v == "module":
            if nxt is not None and nxt.kind == "ident":
                declared.add(nxt.value)
                i += 1
            stmt_start = False
            continue
        if v in KEYWORDS or v in FORBIDDEN:
            stmt_start = v in ("begin", "end", "else")
            continue
        prev = toks[i - 2] if i >= 2 else None
        if prev is not None and prev.kind == "op" and prev.value == ".":
            continue  # named port of an instantiated module
        if stmt_start and paren == 0 and nxt is not None and nxt.kind == "ident":
            declared.add(nxt.value)  # <module type> <instance name> (...)
            i += 1
            stmt_start = False
            continue
        stmt_start = False
        if decl and bracket == 0:
            declared.add(v)
            continue
        if v not in declared:
            findings.append(RtlFinding("undeclared", t.line, f"'{v}' is used before it is declared"))
    return findings


def validate_rtl(artifact) -> list[RtlFinding]:
    """Findings for an ``RtlArtifact`` (or raw Verilog text); empty means it passed."""
    text = artifact if isinstance(artifact, str) else artifact.body
    return validate_text(text)
