"""Recursive-descent parser for the assertion subset.

Accepted surface: an optional ANSI-port module wrapping opaque items
(localparams, clocking blocks, declarations), exactly one
``property ... endproperty`` and exactly one labeled ``assert property``.
Expressions are validated but kept as canonical text.
"""
from __future__ import annotations

import re

from .ast import (AssertionUnit, BooleanProp, ClockSpec, Edge, Implication, ImplOp, Port,
                  PropertyExpr, SeqTerm, Severity)
from .lexer import SvaSyntaxError, Token, join_tokens, tokenize

_BINOPS = {"->", "<->", "||", "&&", "|", "^", "&", "~^", "^~", "==", "!=", "===", "!==",
           "<", "<=", ">", ">=", "<<", ">>", "<<<", ">>>", "+", "-", "*", "/", "%", "**"}
_UNARY = {"!", "~", "-", "+", "&", "|", "^", "~&", "~|", "~^"}
_UNSUPPORTED = {"throughout", "until", "until_with", "s_until", "s_until_with", "intersect",
                "within", "first_match", "and", "or", "not", "eventually", "s_eventually",
                "always", "s_always", "nexttime", "s_nexttime", "inside", "dist", "implies",
                "sequence", "endsequence", "cover", "assume", "restrict", "expect"}
_RESERVED = _UNSUPPORTED | {"posedge", "negedge", "edge", "disable", "iff", "property",
                            "endproperty", "assert", "else", "module", "endmodule", "if",
                            "begin", "end", "clocking", "endclocking", "default", "input",
                            "output", "inout", "localparam", "parameter", "class"}
_NETS = {"wire", "logic", "reg", "bit", "var", "tri"}
_DIRECTIONS = {"input", "output", "inout"}
_COMMENT = re.compile(r"//[^\n]*|/\*.*?\*/", re.DOTALL)
_CLOCKING_DECL = re.compile(r"\bclocking\s+([A-Za-z_]\w*)\s*@\s*\(\s*(posedge|negedge)?\s*\(?\s*([A-Za-z_]\w*)")


def collapse(text: str) -> str:
    """Opaque item text: comments dropped, whitespace runs collapsed."""
    return " ".join(_COMMENT.sub(" ", text).split())


class _Cursor:
    def __init__(self, text: str, tokens: list[Token] | None = None):
        self.text = text
        self.toks = tokens if tokens is not None else tokenize(text)
        if not self.toks or self.toks[-1].kind != "eof":
            end = self.toks[-1].end if self.toks else 0
            self.toks = [*self.toks, Token("eof", "", end, end)]
        self.i = 0

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at_op(self, *values: str) -> bool:
        return self.peek().is_op(*values)

    def at_kw(self, *values: str) -> bool:
        return self.peek().is_kw(*values)

    def error(self, msg: str, expected: tuple[str, ...] = (), tok: Token | None = None) -> SvaSyntaxError:
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.value)
        return SvaSyntaxError(f"{msg}, found {found}", tok.start, self.text, expected)

    def expect_op(self, value: str) -> Token:
        if not self.at_op(value):
            raise self.error(f"expected '{value}'", (value,))
        return self.next()

    def expect_kw(self, value: str) -> Token:
        if not self.at_kw(value):
            raise self.error(f"expected '{value}'", (value,))
        return self.next()

    def expect_ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok.kind != "ident" or tok.value in _RESERVED:
            raise self.error(f"expected {what}", (what,))
        return self.next().value

    def balanced(self, open_: str, close: str) -> list[Token]:
        """Tokens strictly inside a bracket pair; the opener is the current token."""
        self.expect_op(open_)
        depth = 1
        start = self.i
        while True:
            tok = self.next()
            if tok.kind == "eof":
                raise self.error(f"unbalanced '{open_}'", (close,), tok)
            if tok.is_op(open_):
                depth += 1
            elif tok.is_op(close):
                depth -= 1
                if depth == 0:
                    return self.toks[start:self.i - 1]


class _ExprValidator:
    """Checks that a token run is one well-formed expression."""

    def __init__(self, tokens: list[Token], text: str):
        self.c = _Cursor(text, list(tokens))

    def run(self) -> None:
        if self.c.peek().kind == "eof":
            raise self.c.error("expected an expression", ("expression",))
        self.expr()
        if self.c.peek().kind != "eof":
            raise self.c.error("expected an operator or end of expression", ("operator",))

    def expr(self) -> None:
        self.binary()
        if self.c.at_op("?"):
            self.c.next()
            self.expr()
            self.c.expect_op(":")
            self.expr()

    def binary(self) -> None:
        self.unary()
        while self.c.peek().kind == "op" and self.c.peek().value in _BINOPS:
            self.c.next()
            self.unary()

    def unary(self) -> None:
        while self.c.peek().kind == "op" and self.c.peek().value in _UNARY:
            self.c.next()
        self.primary()

    def args(self) -> None:
        self.c.expect_op("(")
        if self.c.at_op(")"):
            self.c.next()
            return
        self.expr()
        while self.c.at_op(","):
            self.c.next()
            self.expr()
        self.c.expect_op(")")

    def primary(self) -> None:
        c = self.c
        tok = c.peek()
        if tok.is_op("("):
            c.next()
            self.expr()
            c.expect_op(")")
        elif tok.is_op("{"):
            c.next()
            self.expr()
            if c.at_op("{"):  # replication {n{x}}
                c.next()
                self.expr()
                c.expect_op("}")
            while c.at_op(","):
                c.next()
                self.expr()
            c.expect_op("}")
        elif tok.kind in ("number", "literal", "string"):
            c.next()
        elif tok.kind == "sysid":
            c.next()
            if c.at_op("("):
                self.args()
        elif tok.kind == "ident":
            if tok.value in _UNSUPPORTED:
                raise c.error(f"'{tok.value}' is outside the supported assertion subset")
            if tok.value in _RESERVED:
                raise c.error(f"keyword '{tok.value}' cannot appear in an expression")
            c.next()
            if c.at_op("("):
                self.args()
            self.postfix()
        else:
            raise c.error("expected an operand", ("identifier", "literal", "("))

    def postfix(self) -> None:
        c = self.c
        while True:
            if c.at_op("["):
                if c.peek(1).is_op("*", "=", "->"):
                    raise c.error("sequence repetition is outside the supported assertion subset")
                c.next()
                self.expr()
                if c.at_op(":", "+:", "-:"):
                    c.next()
                    self.expr()
                c.expect_op("]")
            elif c.at_op("."):
                c.next()
                c.expect_ident()
            else:
                return


def expression_text(tokens: list[Token], text: str) -> str:
    _ExprValidator(tokens, text).run()
    return join_tokens(tokens)


def canonical_expr(expr: str) -> str:
    """Validate ``expr`` and return its canonical spacing."""
    toks = tokenize(expr)[:-1]
    return expression_text(toks, expr)


def split_top_level(expr: str, op: str) -> list[str]:
    """Split canonical expression text on a binary operator at paren depth 0."""
    toks = tokenize(expr)[:-1]
    parts: list[list[Token]] = [[]]
    depth = 0
    for tok in toks:
        if tok.is_op("(", "[", "{"):
            depth += 1
        elif tok.is_op(")", "]", "}"):
            depth -= 1
        if depth == 0 and tok.is_op(op):
            parts.append([])
        else:
            parts[-1].append(tok)
    return [join_tokens(p) for p in parts if p]


class _UnitParser:
    def __init__(self, text: str):
        self.text = text
        self.c = _Cursor(text)
        self.preamble: list[str] = []
        self.prop: tuple[str, ClockSpec | None, str | None, PropertyExpr, Token] | None = None
        self.assertion: tuple[str, str, Severity | None, str | None] | None = None
        self.clock_ref: tuple[str, Token] | None = None

    # -- top level -----------------------------------------------------------
    def parse(self) -> AssertionUnit:
        self._reject_uvm()
        c = self.c
        module_name = None
        ports: tuple[Port, ...] = ()
        if c.at_kw("module"):
            c.next()
            module_name = c.expect_ident("module name")
            if c.at_op("#"):
                raise c.error("module parameters are outside the supported assertion subset")
            if not c.at_op(";"):
                ports = self._ports()
            c.expect_op(";")
        while True:
            tok = c.peek()
            if tok.kind == "eof":
                if module_name is not None:
                    raise c.error("expected 'endmodule'", ("endmodule",))
                break
            if tok.is_kw("endmodule"):
                if module_name is None:
                    raise c.error("'endmodule' without 'module'")
                c.next()
                if c.at_op(":"):
                    c.next()
                    c.expect_ident()
                if c.peek().kind != "eof":
                    raise c.error("unexpected text after 'endmodule'", ("end of input",))
                break
            self._item()
        if self.prop is None:
            raise c.error("expected a 'property' declaration", ("property",))
        if self.assertion is None:
            raise c.error("expected a labeled 'assert property' statement", ("assert",))
        name, clock, disable, body, name_tok = self.prop
        label, target, severity, message = self.assertion
        if clock is not None and clock.block is None and clock.edge is None:
            clock = self._resolve_block(clock.signal)
        return AssertionUnit(
            property_name=name, property_body=body, assert_label=label, clocking=clock,
            disable_expr=disable, assert_target=None if target == name else target,
            severity=severity, message=message, module_name=module_name, ports=ports,
            preamble=tuple(self.preamble))

    def _reject_uvm(self) -> None:
        for tok in self.c.toks:
            if tok.is_kw("class") or (tok.kind == "ident" and tok.value.startswith(("uvm_", "UVM_"))):
                raise SvaSyntaxError("class-based (UVM) testbench code is not an assertion unit; "
                                     "expected a property/assert template", tok.start, self.text)

    def _resolve_block(self, name: str) -> ClockSpec:
        for item in self.preamble:
            m = _CLOCKING_DECL.search(item)
            if m and m.group(1) == name:
                edge = Edge(m.group(2)) if m.group(2) else None
                return ClockSpec(signal=m.group(3), edge=edge, block=name)
        return ClockSpec(signal=name)

    def _ports(self) -> tuple[Port, ...]:
        c = self.c
        c.expect_op("(")
        ports: list[Port] = []
        direction = ""
        if c.at_op(")"):
            c.next()
            return ()
        while True:
            net = None
            if c.at_kw(*_DIRECTIONS):
                direction = c.next().value
            if c.at_kw(*_NETS):
                net = c.next().value
            if c.at_kw("signed", "unsigned"):
                raise c.error("signed ports are outside the supported assertion subset")
            width = None
            if c.at_op("["):
                open_, inner = c.peek(), c.balanced("[", "]")
                width = join_tokens([open_, *inner, c.toks[c.i - 1]])
            name = c.expect_ident("port name")
            ports.append(Port(direction=direction, name=name, width=width, net=net))
            if c.at_op(","):
                c.next()
                continue
            c.expect_op(")")
            return tuple(ports)

    def _item(self) -> None:
        c = self.c
        tok = c.peek()
        if tok.is_kw("property"):
            if self.prop is not None:
                raise c.error("only one property per assertion unit is supported")
            self._property()
        elif tok.kind == "ident" and c.peek(1).is_op(":") and c.peek(2).is_kw("assert"):
            if self.assertion is not None:
                raise c.error("only one assert statement per assertion unit is supported")
            self._assert()
        elif tok.is_kw("assert"):
            raise c.error("assert statement needs a label", ("label:",))
        elif tok.is_kw("sequence", "cover", "assume"):
            raise c.error(f"'{tok.value}' is outside the supported assertion subset")
        else:
            self._opaque()

    def _opaque(self) -> None:
        c = self.c
        start = c.peek()
        closing = None
        if c.at_kw("clocking") or (c.at_kw("default") and c.peek(1).is_kw("clocking")):
            closing = "endclocking"
        depth = 0
        while True:
            tok = c.next()
            if tok.kind == "eof":
                raise c.error("unterminated module item", (";",), tok)
            if tok.is_kw("endmodule", "property", "endproperty"):
                raise c.error("expected ';' to end module item", (";",), tok)
            if closing:
                if tok.is_kw(closing):
                    if c.at_op(":"):
                        c.next()
                        c.next()
                    break
                continue
            if tok.is_kw("begin"):
                depth += 1
            elif tok.is_kw("end"):
                depth -= 1
                if depth == 0:
                    break
            elif tok.is_op(";") and depth == 0:
                break
        end = self.c.toks[self.c.i - 1].end
        self.preamble.append(collapse(self.text[start.start:end]))

    # -- property ------------------------------------------------------------
    def _property(self) -> None:
        c = self.c
        c.expect_kw("property")
        name_tok = c.peek()
        name = c.expect_ident("property name")
        if c.at_op("("):
            raise c.error("property arguments are outside the supported assertion subset")
        c.expect_op(";")
        clock = None
        if c.at_op("@"):
            clock = self._clock()
        disable = None
        if c.at_kw("disable"):
            c.next()
            c.expect_kw("iff")
            if not c.at_op("("):
                raise c.error("expected '(' after 'disable iff'", ("(",))
            inner = c.balanced("(", ")")
            disable = expression_text(inner, self.text)
        antecedent, lead = self._sequence()
        if c.at_op("|->", "|=>"):
            op = ImplOp(c.next().value)
            if lead:
                raise c.error("antecedent cannot start with a cycle delay", tok=lead)
            consequent, _ = self._sequence()
            body: PropertyExpr = Implication(tuple(antecedent), tuple(consequent), op)
        else:
            if lead or len(antecedent) > 1:
                raise c.error("cycle delays need an implication ('|->' or '|=>')", ("|->", "|=>"))
            body = BooleanProp(antecedent[0].expr)
        c.expect_op(";")
        c.expect_kw("endproperty")
        if c.at_op(":"):
            c.next()
            c.expect_ident()
        self.prop = (name, clock, disable, body, name_tok)

    def _clock(self) -> ClockSpec:
        c = self.c
        c.expect_op("@")
        c.expect_op("(")
        edge = None
        if c.at_kw("posedge", "negedge"):
            edge = Edge(c.next().value)
        if c.at_op("("):
            c.next()
            signal = c.expect_ident("clock signal")
            c.expect_op(")")
        else:
            signal = c.expect_ident("clock signal")
        if c.at_kw("or") or c.at_op(","):
            raise c.error("multi-event clocks are outside the supported assertion subset")
        c.expect_op(")")
        return ClockSpec(signal=signal, edge=edge)

    def _delay(self) -> int:
        c = self.c
        c.expect_op("##")
        tok = c.peek()
        if tok.is_op("["):
            raise c.error("cycle-delay ranges are outside the supported assertion subset")
        if tok.kind != "number" or not tok.value.isdigit():
            raise c.error("expected a cycle count after '##'", ("number",))
        c.next()
        return int(tok.value)

    def _sequence(self) -> tuple[list[SeqTerm], Token | None]:
        c = self.c
        terms: list[SeqTerm] = []
        lead = None
        delay = None
        if c.at_op("##"):
            lead = c.peek()
            delay = self._delay()
        while True:
            toks = self._term_tokens()
            terms.append(SeqTerm(expression_text(toks, self.text), delay))
            if c.at_op("##"):
                delay = self._delay()
                continue
            return terms, lead

    def _term_tokens(self) -> list[Token]:
        c = self.c
        start = c.i
        depth = 0
        while True:
            tok = c.peek()
            if tok.kind == "eof":
                break
            if depth == 0 and tok.is_op(";", "|->", "|=>", "##"):
                break
            if tok.is_kw("endproperty"):
                break
            if tok.is_op("(", "[", "{"):
                depth += 1
            elif tok.is_op(")", "]", "}"):
                depth -= 1
                if depth < 0:
                    raise c.error("unbalanced ')'")
            c.next()
        return c.toks[start:c.i]

    # -- assert --------------------------------------------------------------
    def _assert(self) -> None:
        c = self.c
        label = c.expect_ident("assert label")
        c.expect_op(":")
        c.expect_kw("assert")
        c.expect_kw("property")
        if not c.at_op("("):
            raise c.error("expected '(' after 'assert property'", ("(",))
        inner = c.balanced("(", ")")
        target = expression_text(inner, self.text)
        severity = message = None
        if c.at_kw("else"):
            c.next()
            tok = c.peek()
            if tok.kind != "sysid" or tok.value[1:] not in {s.value for s in Severity}:
                raise c.error("expected a severity task", tuple(f"${s.value}" for s in Severity))
            severity = Severity(c.next().value[1:])
            if c.at_op("("):
                c.next()
                s = c.peek()
                if s.kind != "string":
                    raise c.error("expected a message string", ("string",))
                message = c.next().value[1:-1]
                c.expect_op(")")
        elif c.at_kw("begin"):
            raise c.error("assert action blocks are outside the supported assertion subset")
        c.expect_op(";")
        self.assertion = (label, target, severity, message)


def parse_assertion(text: str) -> AssertionUnit:
    try:
        return _UnitParser(text).parse()
    except ValueError as exc:
        if isinstance(exc, SvaSyntaxError):
            raise
        # dataclass invariants (e.g. a non-identifier label)
        raise SvaSyntaxError(str(exc), 0, text) from None
