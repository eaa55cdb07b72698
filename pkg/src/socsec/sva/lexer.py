"""Tokenizer for the SystemVerilog assertion subset."""
from __future__ import annotations

import re
from dataclasses import dataclass


class SvaSyntaxError(ValueError):
    def __init__(self, msg: str, pos: int, text: str = "", expected: tuple[str, ...] = ()):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        detail = f" (expected one of: {', '.join(expected)})" if expected else ""
        super().__init__(f"line {line}, column {col}: {msg}{detail}")
        self.pos = pos
        self.line = line
        self.column = col
        self.expected = expected


@dataclass(frozen=True)
class Token:
    kind: str  # ident, sysid, number, literal, string, op, eof
    value: str
    start: int
    end: int

    def is_op(self, *values: str) -> bool:
        return self.kind == "op" and self.value in values

    def is_kw(self, *values: str) -> bool:
        return self.kind == "ident" and self.value in values


OPERATORS = sorted("""
|-> |=> <-> <<< >>> === !== -> == != <= >= && || << >> ** ~& ~| ~^ ^~ ##
( ) [ ] { } ; : , . ? @ # = ! ~ & | ^ + - * / % < >
""".split(), key=len, reverse=True)

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<literal>(?:\d[\d_]*)?\s*'[sS]?[bBoOdDhH]\s*[0-9a-fA-FxXzZ_?]+|'[01xXzZ])
  | (?P<number>\d[\d_]*(?:\.\d+)?(?:step|ns|ps|us|ms|s)?)
  | (?P<sysid>\$[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<op>""" + "|".join(re.escape(o) for o in OPERATORS) + r""")
""", re.VERBOSE | re.DOTALL)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SvaSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            value = m.group()
            if kind == "literal":
                value = re.sub(r"\s+", "", value)
            tokens.append(Token(kind, value, m.start(), m.end()))
        pos = m.end()
    tokens.append(Token("eof", "", n, n))
    return tokens


_NO_SPACE_AFTER = {"(", "[", "{", "!", "~", "@", "##", "."}
_NO_SPACE_BEFORE = {")", "]", "}", ",", ";", ".", "["}


def join_tokens(tokens: list[Token]) -> str:
    """Canonical text for an expression token run."""
    out: list[str] = []
    prev: Token | None = None
    unary_prev = False
    for tok in tokens:
        v = tok.value
        unary = False
        if tok.is_op("!", "~"):
            unary = True
        elif tok.is_op("-", "+", "&", "|", "^", "~&", "~|", "~^"):
            unary = prev is None or (prev.kind == "op" and prev.value not in (")", "]", "}"))
        if prev is None:
            out.append(v)
        else:
            no_space = (
                (prev.kind == "op" and prev.value in _NO_SPACE_AFTER)
                or unary_prev
                or (tok.kind == "op" and v in _NO_SPACE_BEFORE)
                or (tok.is_op("(") and prev.kind in ("sysid",))
                or (tok.is_op("(") and prev.kind == "ident" and prev.value not in _KEYWORD_SPACED)
                or (tok.is_op(":") and prev.kind != "op" and _in_brackets(out))
                or (prev.is_op(":") and _in_brackets(out))
            )
            out.append(v if no_space else " " + v)
        unary_prev = unary
        prev = tok
    return "".join(out)


_KEYWORD_SPACED = {"iff", "property", "if", "assert", "posedge", "negedge", "or", "and", "not"}


def _in_brackets(out: list[str]) -> bool:
    text = "".join(out)
    return text.count("[") > text.count("]")
