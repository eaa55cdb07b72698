"""Hypothesis strategies shared by the property tests."""
from __future__ import annotations

from hypothesis import strategies as st

from socsec.policy import Placement, PredicateAtom, SecurityPolicy, SignalAssignment, TimingSpec
from socsec.policy import Level as PlacementLevel
from socsec.sva.ast import (AssertionUnit, BooleanProp, ClockSpec, Edge, Implication, ImplOp, Port,
                            SeqTerm, Severity)
from socsec.sva.parser import canonical_expr

_RESERVED = {
    "module", "endmodule", "property", "endproperty", "assert", "else", "begin", "end", "if",
    "disable", "iff", "posedge", "negedge", "input", "output", "wire", "reg", "logic", "and", "or",
    "not", "throughout", "until", "inside", "sequence", "endsequence", "clocking", "endclocking",
    "default", "localparam", "parameter", "assign", "always", "initial", "class", "bit", "int",
    "within", "intersect", "first_match", "cover", "assume", "case", "endcase", "for", "while",
    "function", "task", "return", "static", "automatic", "const", "string", "signed", "unsigned",
    "edge", "inout", "integer", "real", "time", "event", "genvar", "generate", "tri", "wand", "wor",
    "supply0", "supply1", "expect", "restrict", "strong", "weak", "nexttime", "eventually",
    "s_eventually", "always_ff", "always_comb", "always_latch", "byte", "shortint", "longint",
    "typedef", "struct", "union", "enum", "package", "import", "export", "interface", "modport",
    "program", "property_", "implies", "matches", "priority", "unique", "unique0", "randomize",
    "new", "null", "this", "super", "virtual", "extends", "local", "protected", "rand", "randc",
    "constraint", "solve", "before", "dist", "wildcard", "type", "var", "void", "ref", "uvm",
    "s_until", "until_with", "s_until_with", "s_nexttime", "s_always", "accept_on", "reject_on",
    "sync_accept_on", "sync_reject_on", "let", "checker", "endchecker", "global", "untyped",
}

idents = st.from_regex(r"[a-z][a-z0-9_]{0,7}", fullmatch=True).filter(
    lambda s: s not in _RESERVED and not s.startswith("uvm"))

sized = st.builds(lambda w, v: f"{w}'h{v % (1 << min(w, 32)):X}",
                  st.sampled_from([1, 4, 8, 16, 32]), st.integers(0, 2**32 - 1))
atoms = st.one_of(idents, sized, st.integers(0, 255).map(str))


def _exprs():
    base = atoms
    unary = st.builds(lambda o, a: f"{o}{a}", st.sampled_from(["!", "~"]), idents)
    call = st.builds(lambda f, a: f"{f}({a})", st.sampled_from(["$rose", "$fell", "$stable", "$past"]), idents)
    leaf = st.one_of(base, unary, call)
    return st.recursive(
        leaf,
        lambda inner: st.one_of(
            st.builds(lambda a, o, b: f"{a} {o} {b}", inner,
                      st.sampled_from(["&&", "||", "==", "!=", ">=", "<=", "<", ">", "&", "|", "^", "+"]),
                      inner),
            inner.map(lambda e: f"({e})"),
        ),
        max_leaves=6,
    )


exprs = _exprs()
canonical_exprs = exprs.map(canonical_expr)

# ------------------------------------------------------------------ assertion units


@st.composite
def seq_terms(draw, lead_delay: bool):
    n = draw(st.integers(1, 3))
    out = []
    for i in range(n):
        if i == 0:
            delay = draw(st.one_of(st.none(), st.integers(0, 5))) if lead_delay else None
        else:
            delay = draw(st.integers(0, 5))
        out.append(SeqTerm(draw(canonical_exprs), delay))
    return tuple(out)


property_bodies = st.one_of(
    st.builds(BooleanProp, canonical_exprs),
    st.builds(Implication, seq_terms(False), seq_terms(True), st.sampled_from(list(ImplOp))),
)

clocks = st.one_of(st.none(), st.builds(ClockSpec, idents, st.sampled_from([Edge.POSEDGE, Edge.NEGEDGE, None])))
messages = st.from_regex(r"[A-Za-z0-9 _.,:!-]{0,24}", fullmatch=True)
ports = st.lists(st.builds(Port, st.sampled_from(["input", "output"]), idents,
                           st.sampled_from([None, "[31:0]", "[7:0]"]), st.sampled_from([None, "wire", "logic"])),
                 max_size=3, unique_by=lambda p: p.name)


@st.composite
def assertion_units(draw):
    module = draw(st.one_of(st.none(), idents))
    sev = draw(st.one_of(st.none(), st.sampled_from(list(Severity))))
    msg = draw(st.one_of(st.none(), messages)) if sev is not None else None
    return AssertionUnit(
        property_name=draw(idents), property_body=draw(property_bodies), assert_label=draw(idents),
        clocking=draw(clocks), disable_expr=draw(st.one_of(st.none(), canonical_exprs)),
        severity=sev, message=msg, module_name=module,
        ports=tuple(draw(ports)) if module else (),
    )

# ------------------------------------------------------------------ policies


qualified = st.builds(lambda r, ip, s: f"{r}['{ip}'].{s}", st.sampled_from(["slave", "master"]),
                      st.from_regex(r"[A-Z][A-Za-z0-9]{0,5}", fullmatch=True), idents)
targets = st.one_of(idents, qualified)


@st.composite
def predicates(draw):
    n = draw(st.integers(1, 4))
    out = [PredicateAtom.expression(draw(canonical_exprs))]
    for _ in range(n - 1):
        out.append(PredicateAtom.delay(draw(st.integers(1, 8))))
        out.append(PredicateAtom.expression(draw(canonical_exprs)))
    return tuple(out)


timings = st.builds(
    TimingSpec,
    st.one_of(st.none(), st.tuples(st.sampled_from([Edge.POSEDGE, Edge.NEGEDGE, None]), idents)),
    st.one_of(st.none(), st.tuples(st.sampled_from([Edge.POSEDGE, Edge.NEGEDGE]), idents)),
    st.integers(0, 3),
)
placements = st.one_of(st.none(), st.just(Placement(PlacementLevel.BUS)),
                       st.builds(lambda n: Placement(PlacementLevel.IP, n), idents))
policies = st.builds(
    SecurityPolicy, predicates(), timings,
    st.lists(st.builds(SignalAssignment, targets, sized), min_size=1, max_size=3).map(tuple),
    st.one_of(st.none(), st.integers(1, 1500).map(lambda n: f"CWE-{n}")),
    placements,
)
