import pytest
from hypothesis import given, settings

from socsec.cwe_db import CweEntry, lookup
from socsec.sva import (UncorrectableError, correct, correct_detailed, instantiate_template, lint,
                        parse_assertion, render_assertion)
from socsec.sva.ast import BooleanProp, Edge, Implication, ImplOp, Severity
from socsec.sva.lexer import SvaSyntaxError
from socsec.sva.templates import NoTemplateError

from conftest import FIXTURES
from strategies import assertion_units

SVA = FIXTURES / "sva"
LINT = FIXTURES / "lint"


def _read(path):
    return path.read_text()


# ---- parsing

def test_cwe125_unit():
    unit = parse_assertion(_read(SVA / "cwe125_out_of_bounds_read.sv"))
    assert unit.clocking.edge is Edge.POSEDGE and unit.clocking.signal == "clk_i"
    body = unit.property_body
    assert isinstance(body, Implication) and body.operator is ImplOp.OVERLAPPED
    assert [t.expr for t in body.antecedent] == ["$rose(start)"]
    assert [t.expr for t in body.consequent] == ["(wb_adr_i >= 32'h93000004 && wb_adr_i <= 32'h93000008)"]
    assert unit.severity is Severity.DISPLAY
    assert unit.message == "Out-of-bounds Access!"


def test_q2_module_keeps_localparams():
    unit = parse_assertion(_read(SVA / "q2_improper_access_control.sv"))
    assert unit.module_name == "improper_access_control_assertion"
    assert any("localparam SECURE_MEMORY_START_ADDR" in item for item in unit.preamble)
    assert unit.clocking.signal == "clk" and unit.clocking.block == "cb"


def test_assert_may_name_another_target():
    unit = parse_assertion("property p; x; endproperty a: assert property (q);")
    assert unit.assert_target == "q" and unit.target == "q"


def test_minimal_boolean_unit():
    unit = parse_assertion("property p; 1'b1; endproperty a: assert property(p);")
    assert unit.property_body == BooleanProp("1'b1")
    assert unit.clocking is None
    assert render_assertion(unit).splitlines() == [
        "property p;", "    1'b1;", "endproperty", "a: assert property (p);"]


def test_render_cwe327():
    text = render_assertion(parse_assertion(_read(SVA / "cwe327_broken_algo.sv")))
    assert "a_broken_algo: assert property (p_broken_algo)" in text


@pytest.mark.parametrize("text", [
    "",
    "property p; endproperty a: assert property (p);",
    "property p; x; endproperty",
    "module m; property p; x; endproperty a: assert property (p);",
    "`include \"uvm_macros.svh\" property p; x; endproperty a: assert property (p);",
])
def test_rejects_invalid(text):
    with pytest.raises(SvaSyntaxError):
        parse_assertion(text)


@settings(max_examples=1000)
@given(assertion_units())
def test_random_units_round_trip(unit):
    text = render_assertion(unit)
    assert parse_assertion(text) == unit
    assert render_assertion(parse_assertion(text)) == text


# ---- lint

def test_fused_disable():
    [f] = lint(_read(LINT / "r2_fused_disable.sv"))
    assert f.rule_id == "R2"
    assert f.fix == "disable iff (wb_sel_i)"


def test_missing_at():
    [f] = lint(_read(LINT / "r4_missing_at.sv"))
    assert f.rule_id == "R4"
    assert "@" in f.fix


def test_clean_cwe226():
    assert lint(_read(SVA / "cwe226_sensitive_register_clear.sv")) == []


def test_unparseable_reports_r0():
    findings = lint("property p; a |-> ; endproperty")
    assert [f.rule_id for f in findings] == ["R0"]


# ---- correction

def test_q2_constant_bound_to_aes(mit_cep):
    fixed = correct_detailed(_read(SVA / "q2_improper_access_control.sv"), mit_cep, mit_cep.find_ip("AES"))
    assert "SECURE_MEMORY_START_ADDR = 32'h93000014" in fixed.text
    assert [(b.old, b.new) for b in fixed.bindings] == [("32'h80000000", "32'h93000014")]
    parse_assertion(fixed.text)


def test_two_fixes_compose():
    text = ("property p;\n    (posedge(clk_i)) disable_iff(rst_i) $rose(start) |-> valid;\nendproperty\n"
            "a: assert property (p);\n")
    fixed, applied = correct(text)
    assert {f.rule_id for f in applied} == {"R2", "R4"}
    unit = parse_assertion(fixed)
    assert unit.clocking.signal == "clk_i" and unit.disable_expr == "rst_i"
    assert lint(fixed) == []


@pytest.mark.parametrize("path", sorted(SVA.glob("cwe*.sv")), ids=lambda p: p.stem)
def test_clean_text_is_a_fixpoint(path):
    text = _read(path)
    assert correct(text) == (text, [])


def test_uncorrectable():
    with pytest.raises(UncorrectableError):
        correct("property p; a |-> ; endproperty")


# ---- templates

def test_access_control_template(mit_cep, seed_db):
    unit = instantiate_template(lookup(seed_db, "CWE-284"), mit_cep.find_ip("AES"), mit_cep)
    text = render_assertion(unit)
    assert "32'h93000014" in text and "32'h9300003C" in text
    assert isinstance(unit.property_body, Implication)
    assert parse_assertion(text) == unit


def test_race_template(mit_cep, seed_db):
    unit = instantiate_template(lookup(seed_db, "CWE-362"), None, mit_cep)
    body = unit.property_body
    assert [t.expr for t in body.antecedent] == ["(!rst_i)"]
    [cons] = body.consequent
    assert cons.expr.startswith("!(") and "&&" in cons.expr and cons.expr.count("_access") == 2


def test_no_template_for_error_handling(mit_cep):
    entry = CweEntry("CWE-1", "x", "yes", "no", "synchronous", "inadequate_error_handling")
    with pytest.raises(NoTemplateError):
        instantiate_template(entry, None, mit_cep)


@pytest.mark.parametrize("cwe", ["CWE-200", "CWE-284", "CWE-310", "CWE-325", "CWE-261", "CWE-362"])
def test_templates_lint_clean(mit_cep, mit_cep_db, seed_db, cwe):
    entry = lookup(mit_cep_db, cwe) or lookup(seed_db, cwe)
    ip = mit_cep.find_ip("AES") if entry.is_ip else None
    text = render_assertion(instantiate_template(entry, ip, mit_cep))
    assert lint(text) == []
