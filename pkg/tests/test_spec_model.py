import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socsec.spec_model import (AddressRange, BusInterface, IpBlock, MissingAnswerError, Role, SocSpec,
                               SpecRangeError, SpecSchemaError, SpecSyntaxError, UnparseableAnswerError,
                               load_spec, load_survey_template, parse_spec, serialize_spec, spec_to_dict,
                               survey_to_spec)

from conftest import FIXTURES


def _minimal_doc():
    return json.loads((FIXTURES / "minimal_spec.json").read_text())


def test_minimal_document():
    spec = load_spec(FIXTURES / "minimal_spec.json")
    assert spec.name == "MIT-CEP"
    assert spec.bus_protocol == "AXI4"
    masters = [ip for ip in spec.ips if ip.role is Role.MASTER]
    assert [m.name for m in masters] == ["mor1kx"]
    aes = spec.find_ip("AES")
    assert aes.role is Role.SLAVE
    assert aes.protected_range == AddressRange(0x93000014, 0x9300003C)
    # the elided tail of the signal list is dropped
    assert spec.bus_interface.signal_names == ("AWVALID", "AWADDR", "WDATA", "ARREADY", "RDATA")


def test_empty_ip_lists_are_valid():
    doc = _minimal_doc()
    del doc["MASTER_1"], doc["SLAVE_1"]
    doc["SoC"]["NO_OF_MASTERS"] = doc["SoC"]["NO_OF_SLAVES"] = "0"
    spec = parse_spec(json.dumps(doc))
    assert spec.ips == ()
    assert spec_to_dict(spec)["SoC"]["NO_OF_MASTERS"] == "0"


def test_protected_range_outside_address_range_names_the_ip():
    doc = _minimal_doc()
    doc["SLAVE_1"]["PROTECTED_ADDRESS_RANGE"] = "94000014:9400003C"
    with pytest.raises(SpecRangeError, match="AES"):
        parse_spec(json.dumps(doc))


def test_base_address_outside_range():
    doc = _minimal_doc()
    doc["SLAVE_1"]["BASE_ADDRESS"] = "A0000000"
    with pytest.raises(SpecRangeError):
        parse_spec(json.dumps(doc))


@pytest.mark.parametrize("mutate, exc", [
    (lambda d: d["SoC"].pop("BUS"), SpecSchemaError),
    (lambda d: d["SoC"].update(NO_OF_SLAVES="2"), SpecSchemaError),
    (lambda d: d["SoC"].update(NO_OF_SLAVES="two"), SpecSchemaError),
    (lambda d: d["SLAVE_1"].update(BASE_ADDRESS="zz"), SpecSchemaError),
    (lambda d: d["SLAVE_1"].update(BASE_ADDRESS="1FFFFFFFF"), SpecSchemaError),
    (lambda d: d.update(SLAVE_3=d["SLAVE_1"]), SpecSchemaError),
    (lambda d: d["BUS_INTERFACE"].update(SIGNAL_NAMES="a b,c"), SpecSchemaError),
    (lambda d: d["SLAVE_1"].update(NAME=7), SpecSchemaError),
])
def test_schema_violations(mutate, exc):
    doc = _minimal_doc()
    mutate(doc)
    with pytest.raises(exc):
        parse_spec(json.dumps(doc))


def test_syntax_error_reports_position():
    with pytest.raises(SpecSyntaxError):
        parse_spec('{"SoC": ')


def test_minimal_spec_serializes_protected_range():
    spec = load_spec(FIXTURES / "minimal_spec.json")
    doc = spec_to_dict(spec)
    assert doc["SLAVE_1"]["PROTECTED_ADDRESS_RANGE"] == "93000014:9300003C"
    assert parse_spec(serialize_spec(spec)) == spec


def test_unknown_keys_survive(mit_cep):
    doc = _minimal_doc()
    doc["SLAVE_1"]["SIGNALS"] = "clk_i,rst_i"
    doc["EXTRA"] = {"note": "kept"}
    spec = parse_spec(json.dumps(doc))
    assert spec.find_ip("AES").signals == ("clk_i", "rst_i")
    assert parse_spec(serialize_spec(spec)) == spec
    assert parse_spec(serialize_spec(mit_cep)) == mit_cep


def test_find_ip_prefers_name_over_operation(mit_cep):
    assert mit_cep.find_ip("aes").label == "AES"
    assert mit_cep.find_ip("Advanced Encryption Standard").label == "AES"
    assert mit_cep.find_ip("Crypto").label == "AES"  # first Crypto core declared
    assert mit_cep.find_ip("nope") is None


# ---- property: serialize/parse round trip

_text = st.from_regex(r"[A-Za-z][A-Za-z0-9 _-]{0,10}", fullmatch=True)
_sig = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,6}", fullmatch=True)


@st.composite
def _ip(draw, name):
    low = draw(st.integers(0, 0xFFFF0000))
    high = draw(st.integers(low, min(low + 0x00FFFFFF, 0xFFFFFFFF)))
    base = draw(st.integers(low, high))
    prot = None
    if draw(st.booleans()):
        plow = draw(st.integers(low, high))
        prot = AddressRange(plow, draw(st.integers(plow, high)))
    return IpBlock(draw(st.sampled_from(list(Role))), name, draw(_text), draw(_text), base,
                   AddressRange(low, high), draw(st.one_of(st.none(), _text)), prot)


@st.composite
def specs(draw):
    names = draw(st.lists(_text, max_size=5, unique=True))
    ips = [draw(_ip(n)) for n in names]
    masters = sum(ip.role is Role.MASTER for ip in ips)
    signals = tuple(draw(st.lists(_sig, max_size=4)))
    bus = BusInterface(draw(_text), len(signals), signals)
    return SocSpec(draw(_text), draw(_text), draw(_text), draw(_text), masters, len(ips) - masters, bus,
                   tuple(ips))


@settings(max_examples=300)
@given(specs())
def test_spec_round_trip(spec):
    assert parse_spec(serialize_spec(spec)) == spec


# ---- survey

def _answers():
    return {
        "soc.name": "MIT-CEP", "soc.type": "Open-source", "soc.usage": "Academic Research", "soc.bus": "AXI4",
        "bus.interface_name": "Master/Slave", "bus.num_ports": "2", "bus.signal_names": "AWADDR, WDATA",
        "soc.num_masters": "1", "soc.num_slaves": "1",
        "master_1.name": "mor1kx", "master_1.type": "OPen RISC-V", "master_1.operation": "Processor",
        "master_1.address_range": "90000000-99000000", "master_1.base_address": "0x90000000",
        "slave_1.name": "Advanced Encryption Standard", "slave_1.abbreviation": "AES",
        "slave_1.type": "Open-source", "slave_1.operation": "Crypto",
        "slave_1.address_range": "93000000-93FFFFFF", "slave_1.base_address": "93000000",
        "slave_1.protected_range": "93000014:9300003C",
    }


def test_survey_builds_the_hand_written_spec():
    spec = survey_to_spec(_answers())
    hand = SocSpec("MIT-CEP", "Open-source", "Academic Research", "AXI4", 1, 1,
                   BusInterface("Master/Slave", 2, ("AWADDR", "WDATA")), (
                       IpBlock(Role.MASTER, "mor1kx", "OPen RISC-V", "Processor", 0x90000000,
                               AddressRange(0x90000000, 0x99000000)),
                       IpBlock(Role.SLAVE, "Advanced Encryption Standard", "Open-source", "Crypto", 0x93000000,
                               AddressRange(0x93000000, 0x93FFFFFF), "AES",
                               AddressRange(0x93000014, 0x9300003C)),
                   ))
    assert spec == hand
    assert parse_spec(serialize_spec(spec)) == spec


def test_survey_address_range():
    spec = survey_to_spec(_answers())
    assert spec.find_ip("AES").address_range == AddressRange(0x93000000, 0x93FFFFFF)


def test_survey_empty_answers_report_first_question():
    first = load_survey_template().soc[0].id
    with pytest.raises(MissingAnswerError, match=first):
        survey_to_spec({})


def test_survey_optional_questions_may_be_blank():
    answers = _answers()
    answers["slave_1.abbreviation"] = ""
    del answers["slave_1.protected_range"]
    ip = survey_to_spec(answers).find_ip("Crypto")
    assert ip.abbreviation is None and ip.protected_range is None


@pytest.mark.parametrize("key, value", [("bus.num_ports", "many"), ("slave_1.base_address", "xyz"),
                                        ("slave_1.address_range", "93000000")])
def test_survey_unparseable(key, value):
    answers = _answers()
    answers[key] = value
    with pytest.raises(UnparseableAnswerError):
        survey_to_spec(answers)


def test_survey_range_error():
    answers = _answers()
    answers["slave_1.protected_range"] = "94000014:9400003C"
    with pytest.raises(SpecRangeError):
        survey_to_spec(answers)
