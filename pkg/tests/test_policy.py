import json

import pytest
from hypothesis import given, settings

from socsec.cwe_db import lookup
from socsec.policy import (ActionParseError, EmptyPropertyError, Level, Placement, PolicyFormatError,
                           PredicateAtom, SecurityPolicy, SignalAssignment, TimingSpec,
                           UnresolvableSignalError, assertion_to_policy, classify_placement, dumps_policies,
                           flatten_refs, loads_policies, parse_action, parse_policy, render_action,
                           resolve_qualified, serialize_policy)
from socsec.sva import parse_assertion
from socsec.sva.ast import Edge

from conftest import FIXTURES
from strategies import policies


def _unit(text):
    return parse_assertion(text)


def test_boolean_property_single_atom():
    policy = assertion_to_policy(_unit("property p; 1'b1; endproperty a: assert property (p);"), "x = 1'b0;")
    assert policy.predicate == (PredicateAtom.expression("1'b1"),)
    assert policy.timing == TimingSpec(None, None, 0)
    assert policy.action == (SignalAssignment("x", "1'b0"),)


def test_explicit_consequent_delay():
    unit = _unit("property p; @(posedge clk) a |-> ##3 b; endproperty a1: assert property (p);")
    policy = assertion_to_policy(unit, "x = 1'b0;")
    assert [a.kind for a in policy.predicate] == ["expression", "delay", "expression"]
    assert policy.predicate[1].cycles == 3


def test_non_overlapping_implication_adds_a_cycle():
    unit = _unit("property p; @(posedge clk) a |=> b ##2 c; endproperty a1: assert property (p);")
    policy = assertion_to_policy(unit, "x = 1'b0;")
    # a |=> b is a |-> ##1 b
    assert [a.cycles for a in policy.predicate if a.kind == "delay"] == [1, 2]
    unit = _unit("property p; @(posedge clk) a |=> ##2 b; endproperty a1: assert property (p);")
    assert [a.cycles for a in assertion_to_policy(unit, "x = 1'b0;").predicate if a.kind == "delay"] == [3]


def test_zero_delay_fuses():
    unit = _unit("property p; @(posedge clk) a ##0 b |-> c; endproperty a1: assert property (p);")
    exprs = [a.expr for a in assertion_to_policy(unit, "x = 1'b0;").predicate if a.kind == "expression"]
    assert exprs[0] == "(a) && (b)"


def test_reset_and_mode_come_from_the_unit():
    unit = _unit("property p; @(negedge clk) disable iff (rst_n) a |-> b; endproperty a1: assert property (p);")
    policy = assertion_to_policy(unit, "x = 1'b0;", mode=2)
    assert policy.timing.clock == (Edge.NEGEDGE, "clk")
    assert policy.timing.reset[1] == "rst_n"
    assert policy.timing.mode == 2


@pytest.mark.parametrize("text", ["", "x =;", "= 1;", "x == 1;", "1x = 0;"])
def test_bad_actions(text):
    with pytest.raises(ActionParseError):
        parse_action(text)


def test_action_round_trip():
    text = "slave['SPI'].w_data = 32'h0; done = 1'b1;"
    action = parse_action(text)
    assert action == (SignalAssignment("slave['SPI'].w_data", "32'h0"), SignalAssignment("done", "1'b1"))
    assert parse_action(render_action(action)) == action


def test_empty_action_rejected():
    with pytest.raises((ActionParseError, EmptyPropertyError)):
        assertion_to_policy(_unit("property p; a; endproperty a1: assert property (p);"), "   ")


def test_flatten_refs():
    assert flatten_refs("slave['Crypto'].aw_addr >= 1 && slave[`SPI'].w_data") == \
        "slave_Crypto_aw_addr >= 1 && slave_SPI_w_data"


def test_resolve_qualified(mit_cep):
    ip, sig = resolve_qualified("slave_AES_wb_adr_i", mit_cep)
    assert ip.label == "AES" and sig == "wb_adr_i"
    assert resolve_qualified("slave_Nope_x", mit_cep) is None


# ---- placement

def test_bus_race_policy_is_bus_level(mit_cep):
    [policy] = loads_policies((FIXTURES / "policies" / "bus_race_policy.json").read_text())
    placed = classify_placement(SecurityPolicy(policy.predicate, policy.timing, policy.action), None, mit_cep)
    assert placed.placement == Placement(Level.BUS)


def test_ip_local_signal_is_ip_level(mit_cep, seed_db):
    unit = parse_assertion((FIXTURES / "sva" / "cwe125_out_of_bounds_read.sv").read_text())
    policy = assertion_to_policy(unit, "wb_dat_o = 32'h0;")
    placed = classify_placement(policy, lookup(seed_db, "CWE-310"), mit_cep, ip_hint=mit_cep.find_ip("AES"))
    assert placed.placement.level is Level.IP
    assert mit_cep.find_ip(placed.placement.ip).label == "AES"


def test_unknown_signal(mit_cep):
    policy = SecurityPolicy((PredicateAtom.expression("zz_unknown"),), TimingSpec(None, None, 0),
                            (SignalAssignment("zz_unknown", "1'b0"),))
    with pytest.raises(UnresolvableSignalError):
        classify_placement(policy, None, mit_cep)


# ---- codec

def test_cwe125_round_trip():
    unit = parse_assertion((FIXTURES / "sva" / "cwe125_out_of_bounds_read.sv").read_text())
    policy = assertion_to_policy(unit, "slave['SPI'].w_data = 32'h0;", source_cwe="CWE-125")
    assert parse_policy(serialize_policy(policy)) == policy
    assert loads_policies(dumps_policies([policy])) == [policy]


def test_minimal_document_has_three_keys():
    policy = SecurityPolicy((PredicateAtom.expression("1'b1"),), TimingSpec(None, None, 0),
                            (SignalAssignment("x", "1'b0"),))
    assert set(serialize_policy(policy)) == {"predicate", "timing", "action"}


@pytest.mark.parametrize("doc", [
    {"predicate": [], "timing": {}, "action": [{"target": "x", "value": "1"}]},
    {"predicate": [{"expr": "a"}, {"expr": "b"}], "timing": {}, "action": [{"target": "x", "value": "1"}]},
    {"predicate": [{"expr": "a"}], "timing": {"mode": -1}, "action": [{"target": "x", "value": "1"}]},
    {"predicate": [{"expr": "a"}], "timing": {}, "action": []},
    {"predicate": [{"delay_cycles": 0}], "timing": {}, "action": [{"target": "x", "value": "1"}]},
])
def test_malformed_documents(doc):
    with pytest.raises(PolicyFormatError):
        parse_policy(doc)


def test_loads_accepts_single_document():
    policy = SecurityPolicy((PredicateAtom.expression("a"),), TimingSpec(None, None, 0),
                            (SignalAssignment("x", "1'b0"),))
    assert loads_policies(json.dumps(serialize_policy(policy))) == [policy]


@settings(max_examples=1000)
@given(policies)
def test_random_policies_round_trip(policy):
    assert parse_policy(serialize_policy(policy)) == policy
    assert parse_policy(json.loads(json.dumps(serialize_policy(policy)))) == policy
