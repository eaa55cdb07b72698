import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socsec.codegen import (CodegenError, UnknownPortError, UnresolvedSignalError,
                            build_central_module, build_ip_wrapper, policy_to_logic, validate_rtl, write_rtl)
from socsec.codegen.generate import RtlPort
from socsec.policy import (Level, Placement, PredicateAtom, SecurityPolicy, SignalAssignment, TimingSpec,
                           loads_policies)
from socsec.sva.ast import Edge

from conftest import FIXTURES

BUS = Placement(Level.BUS)


def _policy(*atoms, action=(("x", "1'b0"),), clock=None, reset=None, cwe=None, placement=None):
    pred = tuple(PredicateAtom.delay(a) if isinstance(a, int) else PredicateAtom.expression(a) for a in atoms)
    return SecurityPolicy(pred, TimingSpec(clock, reset, 0), tuple(SignalAssignment(t, v) for t, v in action),
                          cwe, placement)


@pytest.fixture(scope="module")
def bus_race():
    return loads_policies((FIXTURES / "policies" / "bus_race_policy.json").read_text())


def test_bus_race_fragment(bus_race):
    text = policy_to_logic(bus_race[0])
    guard = "if(slave_Crypto_aw_addr >= 32'h93000014 && slave_Crypto_aw_addr <= 32'h93000028) begin"
    lines = [line.strip() for line in text.splitlines()]
    i = lines.index(guard)
    assert lines[i + 1] == "slave_SPI_w_data = 32'h0;"


def test_two_atom_sequence_uses_one_flop():
    text = policy_to_logic(_policy("a", 1, "b", clock=(Edge.POSEDGE, "clk")))
    flops = re.findall(r"(\w+) <= a;", text)
    assert len(flops) == 1
    assert f"if({flops[0]} && (b)) begin" in text
    assert "always @(posedge clk)" in text


def test_longer_delay_shifts():
    text = policy_to_logic(_policy("a", 3, "b", clock=(Edge.POSEDGE, "clk")))
    assert len(re.findall(r"<=", text)) == 3


def test_sampled_functions_get_registers():
    text = policy_to_logic(_policy("$rose(start)", clock=(Edge.POSEDGE, "clk")))
    assert "$rose" not in text
    assert re.search(r"\(start\) && !\(p0_smp_q\d+\)", text)


def test_bus_race_central_module(bus_race, mit_cep):
    art = build_central_module(bus_race, mit_cep)
    names = {p.name: p for p in art.port_list}
    assert names["slave_Crypto_aw_addr"].direction == "input"
    assert names["slave_SPI_w_data"].direction == "output"
    assert names["slave_SPI_w_data_in"].direction == "input"
    assert "slave_SPI_w_data = slave_SPI_w_data_in;" in art.body
    assert validate_rtl(art) == []
    assert ("slave_Crypto_aw_addr", "slave['AES'].aw_addr", "input") in art.signal_map


def test_empty_central_module(mit_cep):
    art = build_central_module([], mit_cep)
    assert [p.name for p in art.port_list] == ["clk", "rst"]
    assert "always" not in art.body
    assert validate_rtl(art) == []


def test_shared_target_last_write_wins(mit_cep):
    early = _policy("slave_AES_start", action=(("slave_SPI_w_data", "32'h0"),), cwe="CWE-200", placement=BUS)
    late = _policy("slave_DES3_start", action=(("slave_SPI_w_data", "32'h1"),), cwe="CWE-1191", placement=BUS)
    art = build_central_module([late, early], mit_cep)
    assert [p.name for p in art.port_list].count("slave_SPI_w_data") == 1
    assert art.policies_included == ["CWE-200", "CWE-1191"]
    assert art.body.index("32'h0;") < art.body.index("32'h1;")
    assert "last matching policy wins" in art.body
    assert validate_rtl(art) == []


def test_ip_policy_refused_by_central(mit_cep):
    with pytest.raises(CodegenError):
        build_central_module([_policy("a", placement=Placement(Level.IP, "AES"))], mit_cep)


def test_unresolved_signal(mit_cep):
    with pytest.raises(UnresolvedSignalError):
        build_central_module([_policy("zz_unknown")], mit_cep)


def test_wrapper_gates_address(mit_cep):
    aes = mit_cep.find_ip("AES")
    policy = _policy("wb_we_i && wb_adr_i >= 32'h93000014", action=(("wb_adr_i", "32'h0"),),
                     placement=Placement(Level.IP, aes.name), cwe="CWE-284")
    art = build_ip_wrapper(aes, [policy])
    assert art.module_name == "AES_wrapper"
    assert "wb_adr_i_sec = wb_adr_i;" in art.body
    assert "wb_adr_i_sec = 32'h0;" in art.body
    assert ".wb_adr_i(wb_adr_i_sec)" in art.body
    assert art.body.index("always @(*)") < art.body.index("AES u_aes")
    assert validate_rtl(art) == []


def test_wrapper_overrides_output(mit_cep):
    aes = mit_cep.find_ip("AES")
    policy = _policy("start", action=(("wb_dat_o", "32'h0"),), placement=Placement(Level.IP, aes.name))
    art = build_ip_wrapper(aes, [policy])
    out = [p for p in art.port_list if p.name == "wb_dat_o"][0]
    assert out.direction == "output" and out.reg
    assert ".wb_dat_o(wb_dat_o_raw)" in art.body
    assert validate_rtl(art) == []


def test_zero_policy_wrapper_passes_through(mit_cep):
    ports = [RtlPort("input", 1, "clk_i"), RtlPort("output", 8, "q")]
    art = build_ip_wrapper(mit_cep.find_ip("SPI"), [], inner_ports=ports)
    assert ".clk_i(clk_i)" in art.body and ".q(q)" in art.body
    assert "always" not in art.body
    assert validate_rtl(art) == []


def test_unknown_port(mit_cep):
    with pytest.raises(UnknownPortError):
        build_ip_wrapper(mit_cep.find_ip("AES"), [_policy("nonexistent_sig", action=(("wb_dat_o", "1'b0"),))])


def test_reserved_word_signal_is_escaped():
    ports = [RtlPort("input", 1, "release"), RtlPort("output", 1, "q")]
    from socsec.spec_model import AddressRange, IpBlock, Role
    ip = IpBlock(Role.SLAVE, "Regs", "x", "Memory", 0, AddressRange(0, 1))
    art = build_ip_wrapper(ip, [_policy("release", action=(("q", "1'b0"),))], inner_ports=ports)
    assert "\\release " in art.body
    assert validate_rtl(art) == []


def test_write_rtl(bus_race, mit_cep, tmp_path):
    arts = [build_central_module(bus_race, mit_cep), build_ip_wrapper(mit_cep.find_ip("AES"), [])]
    paths = write_rtl(arts, tmp_path)
    assert sorted(p.name for p in paths) == ["AES_wrapper.v", "security_module.v", "signal_map.tsv"]
    rows = (tmp_path / "signal_map.tsv").read_text().splitlines()
    assert rows[0] == "flat_name\treference\tmodule\tdirection"
    assert any(r.startswith("slave_SPI_w_data\tslave['SPI'].w_data\tsecurity_module") for r in rows)


# ---- validator

def test_validator_flags_initial(bus_race, mit_cep):
    body = build_central_module(bus_race, mit_cep).body
    bad = body.replace("always @(*) begin", "initial begin\n    end\n    always @(*) begin", 1)
    assert {f.rule for f in validate_rtl(bad)} == {"subset"}


def test_validator_flags_undeclared():
    text = "module m (input wire a, output reg b);\n    always @(*) begin\n        b = a & c;\n    end\nendmodule\n"
    findings = validate_rtl(text)
    assert [(f.rule, f.line) for f in findings] == [("undeclared", 3)]


@pytest.mark.parametrize("text, rule", [
    ("module m;\n    always @(*) begin\nendmodule\n", "structure"),
    ("always @(*) begin end\n", "structure"),
    ("module m (input wire a);\n    wire b;\n    assign #1 b = a;\nendmodule\n", "subset"),
    ("module m (input wire a);\n    always @(*) $display(a);\nendmodule\n", "subset"),
])
def test_validator_rules(text, rule):
    assert rule in {f.rule for f in validate_rtl(text)}


# ---- generator/validator agreement over random bus-level policies

_SIGNALS = ["slave['AES'].wb_adr_i", "slave['AES'].start", "slave['SPI'].wb_dat_i", "master['mor1kx'].wb_we_i",
            "AWADDR", "WDATA", "slave['DES3'].key"]
_TARGETS = ["slave['SPI'].w_data", "slave['AES'].wb_dat_o", "WDATA"]
_leaf = st.one_of(st.sampled_from(_SIGNALS),
                  st.builds(lambda v: f"32'h{v:08X}", st.integers(0, 2**32 - 1)),
                  st.builds(lambda f, s: f"{f}({s})", st.sampled_from(["$rose", "$fell", "$stable", "$past",
                                                                       "$changed"]), st.sampled_from(_SIGNALS)))
_expr = st.recursive(_leaf, lambda e: st.one_of(
    st.builds(lambda a, o, b: f"{a} {o} {b}", e, st.sampled_from(["&&", "||", "==", ">=", "<", "&", "|", "->",
                                                                   "==="]), e),
    st.builds(lambda a: f"!({a})", e), e.map(lambda a: f"({a})")), max_leaves=5)


@st.composite
def _bus_policy(draw):
    n = draw(st.integers(1, 3))
    atoms = [draw(_expr)]
    for _ in range(n - 1):
        atoms += [draw(st.integers(1, 4)), draw(_expr)]
    clock = draw(st.one_of(st.none(), st.just((Edge.POSEDGE, "ACLK")), st.just((Edge.NEGEDGE, "ACLK"))))
    reset = draw(st.one_of(st.none(), st.just((Edge.NEGEDGE, "ARESETn"))))
    action = draw(st.lists(st.tuples(st.sampled_from(_TARGETS), st.sampled_from(["32'h0", "1'b0", "32'hDEAD"])),
                           min_size=1, max_size=2, unique_by=lambda t: t[0]))
    cwe = draw(st.one_of(st.none(), st.integers(1, 1500).map(lambda i: f"CWE-{i}")))
    return _policy(*atoms, action=tuple(action), clock=clock, reset=reset, cwe=cwe, placement=BUS)


@settings(max_examples=300)
@given(st.lists(_bus_policy(), max_size=4))
def test_generated_central_modules_validate(mit_cep, pols):
    art = build_central_module(pols, mit_cep)
    assert validate_rtl(art) == [], art.body
    assert len(re.findall(r"^module ", art.body, re.M)) == 1
