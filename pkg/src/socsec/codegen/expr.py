"""Lower assertion-style expressions to synthesizable Verilog.

Sampled-value functions become comparisons against registered copies,
logical implication becomes ``!a || b`` and case equality becomes
ordinary equality. Everything else is re-emitted with its original
grouping so simple guards come out token-for-token unchanged.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..sva.lexer import Token, tokenize

_PREC = {
    "->": 1, "<->": 1,
    "||": 3, "&&": 4, "|": 5, "^": 6, "~^": 6, "^~": 6, "&": 7,
    "==": 8, "!=": 8, "===": 8, "!==": 8,
    "<": 9, "<=": 9, ">": 9, ">=": 9,
    "<<": 10, ">>": 10, "<<<": 10, ">>>": 10,
    "+": 11, "-": 11, "*": 12, "/": 12, "%": 12, "**": 13,
}
_RIGHT = {"->", "<->", "**"}
_UNARY = {"!", "~", "-", "+", "&", "|", "^", "~&", "~|", "~^"}
_COMPARE = {"==", "!=", "===", "!==", "<", "<=", ">", ">="}


class LoweringError(ValueError):
    pass


@dataclass
class Node:
    kind: str  # atom, ident, paren, unary, binary, cond, call, select, concat
    text: str = ""
    kids: list["Node"] = field(default_factory=list)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        tok = self.toks[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def expect(self, value: str) -> None:
        tok = self.next()
        if not tok.is_op(value):
            raise LoweringError(f"expected '{value}' in {self.text!r}")

    def parse(self) -> Node:
        node = self.expr()
        if self.peek().kind != "eof":
            raise LoweringError(f"trailing text in {self.text!r}")
        return node

    def expr(self, min_prec: int = 0) -> Node:
        left = self.unary()
        while True:
            tok = self.peek()
            if tok.is_op("?") and min_prec <= 2:
                self.next()
                a = self.expr()
                self.expect(":")
                b = self.expr(2)
                left = Node("cond", kids=[left, a, b])
                continue
            prec = _PREC.get(tok.value) if tok.kind == "op" else None
            if prec is None or prec < min_prec:
                return left
            self.next()
            right = self.expr(prec if tok.value in _RIGHT else prec + 1)
            left = Node("binary", tok.value, [left, right])

    def unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.value in _UNARY:
            self.next()
            return Node("unary", tok.value, [self.unary()])
        return self.postfix(self.primary())

    def args(self) -> list[Node]:
        self.expect("(")
        out: list[Node] = []
        if self.peek().is_op(")"):
            self.next()
            return out
        out.append(self.expr())
        while self.peek().is_op(","):
            self.next()
            out.append(self.expr())
        self.expect(")")
        return out

    def primary(self) -> Node:
        tok = self.next()
        if tok.is_op("("):
            inner = self.expr()
            self.expect(")")
            return Node("paren", kids=[inner])
        if tok.is_op("{"):
            items = [self.expr()]
            if self.peek().is_op("{"):
                self.next()
                inner = [self.expr()]
                while self.peek().is_op(","):
                    self.next()
                    inner.append(self.expr())
                self.expect("}")
                self.expect("}")
                return Node("concat", "repl", [items[0], Node("concat", "", inner)])
            while self.peek().is_op(","):
                self.next()
                items.append(self.expr())
            self.expect("}")
            return Node("concat", "", items)
        if tok.kind in ("number", "literal"):
            return Node("atom", tok.value)
        if tok.kind == "sysid":
            args = self.args() if self.peek().is_op("(") else []
            return Node("call", tok.value, args)
        if tok.kind == "ident":
            if self.peek().is_op("("):
                raise LoweringError(f"function call {tok.value}() is not supported in enforcement logic")
            return Node("ident", tok.value)
        raise LoweringError(f"unexpected {tok.value or 'end of text'!r} in {self.text!r}")

    def postfix(self, node: Node) -> Node:
        while True:
            if self.peek().is_op("["):
                self.next()
                hi = self.expr()
                kids = [node, hi]
                if self.peek().is_op(":"):
                    self.next()
                    kids.append(self.expr())
                self.expect("]")
                node = Node("select", kids=kids)
            elif self.peek().is_op("."):
                raise LoweringError("member selects are not supported in enforcement logic")
            else:
                return node


def parse_expr(text: str) -> Node:
    return _Parser(text).parse()


@dataclass
class Sampler:
    """Registered copies requested while lowering (``$past`` and friends)."""
    prefix: str
    regs: list[tuple[str, str, int]] = field(default_factory=list)  # (name, source expr, width)
    _memo: dict[str, str] = field(default_factory=dict)

    def past(self, expr: str, width: int, depth: int = 1) -> str:
        src = expr
        name = ""
        for _ in range(depth):
            key = src
            if key not in self._memo:
                name = f"{self.prefix}_q{len(self.regs)}"
                self.regs.append((name, src, width))
                self._memo[key] = name
            name = self._memo[key]
            src = name
        return name


def _width_of(node: Node, widths: dict[str, int]) -> int:
    if node.kind == "ident":
        return widths.get(node.text, 1)
    if node.kind == "paren":
        return _width_of(node.kids[0], widths)
    return 1


def emit(node: Node, sampler: Sampler | None = None, widths: dict[str, int] | None = None) -> str:
    widths = widths or {}
    k = node.kind
    if k in ("atom", "ident"):
        return node.text
    if k == "paren":
        return "(" + emit(node.kids[0], sampler, widths) + ")"
    if k == "unary":
        return node.text + emit(node.kids[0], sampler, widths)
    if k == "binary":
        l, r = (emit(c, sampler, widths) for c in node.kids)
        if node.text == "->":
            return f"(!({l}) || ({r}))"
        if node.text == "<->":
            return f"(({l}) == ({r}))"
        op = {"===": "==", "!==": "!="}.get(node.text, node.text)
        return f"{l} {op} {r}"
    if k == "cond":
        c, a, b = (emit(x, sampler, widths) for x in node.kids)
        return f"{c} ? {a} : {b}"
    if k == "select":
        base = emit(node.kids[0], sampler, widths)
        idx = ":".join(emit(c, sampler, widths) for c in node.kids[1:])
        return f"{base}[{idx}]"
    if k == "concat":
        if node.text == "repl":
            return "{" + emit(node.kids[0], sampler, widths) + emit(node.kids[1], sampler, widths) + "}"
        return "{" + ", ".join(emit(c, sampler, widths) for c in node.kids) + "}"
    if k == "call":
        return _lower_call(node, sampler, widths)
    raise LoweringError(f"cannot emit {k}")


def _lower_call(node: Node, sampler: Sampler | None, widths: dict[str, int]) -> str:
    name = node.text
    args = node.kids
    if name in ("$onehot", "$onehot0") and len(args) == 1:
        x = emit(args[0], sampler, widths)
        zero_or_one = f"((({x}) & (({x}) - 1'b1)) == 0)"
        return f"(({x}) != 0 && {zero_or_one})" if name == "$onehot" else zero_or_one
    if name not in ("$rose", "$fell", "$stable", "$changed", "$past"):
        raise LoweringError(f"{name} has no synthesizable equivalent")
    if sampler is None:
        raise LoweringError(f"{name} needs a clock")
    if not args:
        raise LoweringError(f"{name} needs an argument")
    x = emit(args[0], sampler, widths)
    width = _width_of(args[0], widths)
    if name == "$past":
        depth = 1
        if len(args) > 1:
            d = emit(args[1])
            if not re.fullmatch(r"\d+", d) or int(d) < 1:
                raise LoweringError("$past depth must be a positive constant")
            depth = int(d)
        return sampler.past(x, width, depth)
    q = sampler.past(x, width)
    if name == "$rose":
        return f"(({x}) && !({q}))"
    if name == "$fell":
        return f"(!({x}) && ({q}))"
    if name == "$stable":
        return f"(({x}) == ({q}))"
    return f"(({x}) != ({q}))"


def identifiers(node: Node) -> list[str]:
    out: list[str] = []

    def walk(n: Node) -> None:
        if n.kind == "ident":
            out.append(n.text)
        for c in n.kids:
            walk(c)
    walk(node)
    return list(dict.fromkeys(out))


def literal_width(text: str) -> int | None:
    m = re.fullmatch(r"(\d+)'[sS]?[bBoOdDhH][0-9a-fA-FxXzZ_?]+", text.strip())
    return int(m.group(1)) if m else None


def comparison_widths(node: Node) -> dict[str, int]:
    """Widths implied by ``ident OP sized-literal`` comparisons."""
    found: dict[str, int] = {}

    def walk(n: Node) -> None:
        if n.kind == "binary" and n.text in _COMPARE:
            a, b = n.kids
            for x, y in ((a, b), (b, a)):
                if x.kind == "ident" and y.kind == "atom":
                    w = literal_width(y.text)
                    if w:
                        found.setdefault(x.text, w)
        for c in n.kids:
            walk(c)
    walk(node)
    return found
