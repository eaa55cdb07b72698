import json

import pytest
import requests

from socsec.llm_client import (AuditLog, AuthError, CweCandidate, HttpProvider, MockMissError, MockProvider,
                               NoCodeFoundError, ProviderConfig, ProviderError, Relevance, TransportError,
                               extract_code_block, parse_cwe_list, parse_relevance, render_cwe_list)
from socsec.query_gen import cwe_enumeration_query
from socsec.sva import parse_assertion

from conftest import FIXTURES


def test_q1_response_candidates():
    cands = parse_cwe_list((FIXTURES / "llm" / "q1_response.txt").read_text())
    assert len(cands) == 21
    assert (cands[0].id, cands[0].description) == ("CWE-20", "Improper Input Validation")
    assert [c.source_rank for c in cands] == list(range(1, 22))


def test_no_mentions():
    assert parse_cwe_list("Nothing to see here.\nReally.") == []


def test_repeated_id_with_other_description_is_kept():
    text = ("- CWE-400: Uncontrolled Resource Consumption ('Resource Exhaustion') - IP Level\n"
            "- CWE-400: Uncontrolled Resource Consumption - Bus Level\n"
            "- CWE-400: Uncontrolled Resource Consumption - Bus Level\n")
    cands = parse_cwe_list(text)
    assert [c.id for c in cands] == ["CWE-400", "CWE-400"]


def test_render_then_parse():
    cands = [CweCandidate("CWE-20", "Improper Input Validation", 1), CweCandidate("CWE-7", "", 2)]
    assert parse_cwe_list(render_cwe_list(cands)) == cands


def test_candidate_validation():
    with pytest.raises(ValueError):
        CweCandidate("cwe20", "x", 1)
    with pytest.raises(ValueError):
        CweCandidate("CWE-20", "x", 0)


@pytest.mark.parametrize("text, want", [
    ("Yes, CWE-284 is relevant because the bus is shared.", Relevance.RELEVANT),
    ("No, this is a web-application weakness.", Relevance.NOT_RELEVANT),
    ("It depends on the deployment.", Relevance.INDETERMINATE),
    ("This weakness is not relevant to hardware.", Relevance.NOT_RELEVANT),
    ("**Yes.** It applies.", Relevance.RELEVANT),
])
def test_relevance(text, want):
    assert parse_relevance(text) is want


def test_q2_code_block():
    code = extract_code_block((FIXTURES / "llm" / "q2_response.txt").read_text())
    assert code.startswith("module improper_access_control_assertion")
    assert parse_assertion(code).module_name == "improper_access_control_assertion"


def test_prose_only():
    with pytest.raises(NoCodeFoundError):
        extract_code_block("I cannot write that assertion, sorry.")


def test_first_of_two_blocks():
    text = "a\n```verilog\nproperty p; x; endproperty\n```\nb\n```\nsecond\n```\n"
    assert extract_code_block(text) == "property p; x; endproperty\n"


def test_unfenced_property_region():
    text = "Here:\nproperty p;\n  x;\nendproperty\na: assert property (p);\n\nThanks."
    assert extract_code_block(text) == "property p;\n  x;\nendproperty\na: assert property (p);\n"


# ---- providers

def test_mock_provider(tmp_path, mit_cep):
    q = cwe_enumeration_query(mit_cep)
    audit = AuditLog(tmp_path / "audit.jsonl")
    mock = MockProvider(tmp_path / "mocks", audit)
    with pytest.raises(MockMissError):
        mock.send(q)
    mock.record(q, "- CWE-20: Improper Input Validation\n")
    assert mock.send(q) == "- CWE-20: Improper Input Validation\n"
    records = [json.loads(line) for line in (tmp_path / "audit.jsonl").read_text().splitlines()]
    assert [r["error"] for r in records] == ["miss", None]


class _Resp:
    def __init__(self, status, payload):
        self.status_code = status
        self._payload = payload

    def json(self):
        if self._payload is None:
            raise ValueError("not json")
        return self._payload


class _Session:
    def __init__(self, *responses):
        self.responses = list(responses)
        self.calls = 0

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls += 1
        r = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        if isinstance(r, Exception):
            raise r
        return r


def _provider(session, **kw):
    cfg = ProviderConfig(endpoint_url="http://127.0.0.1:9/x", api_key_ref=None, max_retries=2, **kw)
    return HttpProvider(cfg, session=session, sleep=lambda s: None)


def test_unreachable_endpoint_retries(mit_cep):
    session = _Session(requests.ConnectionError("refused"))
    with pytest.raises(TransportError) as err:
        _provider(session).send(cwe_enumeration_query(mit_cep))
    assert session.calls == 3
    assert err.value.attempts == 3


def test_server_error_then_success(mit_cep):
    ok = _Resp(200, {"choices": [{"message": {"content": "hello"}}]})
    session = _Session(_Resp(503, {}), ok)
    assert _provider(session).send(cwe_enumeration_query(mit_cep)) == "hello"
    assert session.calls == 2


def test_auth_and_provider_errors(mit_cep, monkeypatch):
    q = cwe_enumeration_query(mit_cep)
    with pytest.raises(AuthError):
        _provider(_Session(_Resp(401, {}))).send(q)
    with pytest.raises(ProviderError):
        _provider(_Session(_Resp(400, {"error": {"message": "bad model"}}))).send(q)
    with pytest.raises(ProviderError):
        _provider(_Session(_Resp(200, None))).send(q)
    monkeypatch.delenv("SOCSEC_TEST_KEY", raising=False)
    cfg = ProviderConfig(api_key_ref="SOCSEC_TEST_KEY")
    with pytest.raises(AuthError):
        HttpProvider(cfg, session=_Session(_Resp(200, {}))).send(q)


def test_config_validation():
    with pytest.raises(ValueError):
        ProviderConfig(max_retries=-1)
    with pytest.raises(ValueError):
        ProviderConfig(temperature=3.0)


@pytest.mark.network
def test_live_provider_smoke(mit_cep):
    import os
    if not os.environ.get("OPENAI_API_KEY"):
        pytest.skip("no OPENAI_API_KEY in the environment")
    text = HttpProvider(ProviderConfig()).send(cwe_enumeration_query(mit_cep))
    assert text.strip()
