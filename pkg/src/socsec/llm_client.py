"""LLM access (HTTP chat-completions or file-backed mock) and response parsing."""
from __future__ import annotations

import json
import logging
import os
import re
import textwrap
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

import requests

from .query_gen import QueryText

log = logging.getLogger(__name__)

AUDIT_LOG_NAME = "llm_audit.jsonl"


class LlmError(RuntimeError):
    pass


class TransportError(LlmError):
    def __init__(self, msg: str, attempts: int):
        super().__init__(msg)
        self.attempts = attempts


class AuthError(LlmError):
    pass


class ProviderError(LlmError):
    pass


class MockMissError(LlmError):
    def __init__(self, query: QueryText, path: Path):
        super().__init__(f"no mock response for {query.kind.value} query {query.digest} (expected {path})")
        self.query = query
        self.path = path


class NoCodeFoundError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-4"
    api_key_ref: str | None = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")


@dataclass(frozen=True)
class CweCandidate:
    id: str
    description: str
    source_rank: int

    def __post_init__(self) -> None:
        if not re.fullmatch(r"CWE-\d+", self.id):
            raise ValueError(f"bad CWE id {self.id!r}")
        if self.source_rank < 1:
            raise ValueError("source_rank starts at 1")


class AuditLog:
    """Append-only JSON-lines log; appends are serialized across threads."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class Provider(Protocol):
    def send(self, query: QueryText) -> str: ...


def _audit(log_: AuditLog | None, provider: str, query: QueryText, response: str | None,
           attempts: int, error: str | None = None) -> None:
    if log_ is None:
        return
    log_.append({
        "provider": provider,
        "kind": query.kind.value,
        "digest": query.digest,
        "request": query.body,
        "response": response,
        "attempts": attempts,
        "error": error,
    })


class HttpProvider:
    """Chat-completions style endpoint: ``messages`` in, ``choices`` out."""

    def __init__(self, config: ProviderConfig, audit_log: AuditLog | None = None,
                 session: requests.Session | None = None, sleep: Callable[[float], None] = time.sleep,
                 backoff: float = 1.0):
        self.config = config
        self.audit_log = audit_log
        self.session = session or requests.Session()
        self.sleep = sleep
        self.backoff = backoff

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        ref = self.config.api_key_ref
        if ref:
            key = os.environ.get(ref)
            if not key:
                raise AuthError(f"environment variable {ref} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def send(self, query: QueryText) -> str:
        cfg = self.config
        payload = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "messages": [{"role": "user", "content": query.body}],
        }
        headers = self._headers()
        attempts = 0
        last: Exception | None = None
        while attempts <= cfg.max_retries:
            attempts += 1
            try:
                resp = self.session.post(cfg.endpoint_url, json=payload, headers=headers, timeout=cfg.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = exc
                log.warning("LLM transport error (attempt %d): %s", attempts, exc)
                if attempts <= cfg.max_retries:
                    self.sleep(self.backoff * 2 ** (attempts - 1))
                continue
            if resp.status_code in (401, 403):
                _audit(self.audit_log, "http", query, None, attempts, f"auth {resp.status_code}")
                raise AuthError(f"provider rejected credentials ({resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last = ProviderError(f"HTTP {resp.status_code}")
                if attempts <= cfg.max_retries:
                    self.sleep(self.backoff * 2 ** (attempts - 1))
                continue
            try:
                data = resp.json()
            except ValueError:
                raise ProviderError(f"non-JSON response (HTTP {resp.status_code})") from None
            if resp.status_code >= 400 or "error" in data:
                err = data.get("error")
                msg = err.get("message", err) if isinstance(err, dict) else err
                _audit(self.audit_log, "http", query, None, attempts, str(msg))
                raise ProviderError(f"provider error: {msg}")
            text = data["choices"][0]["message"]["content"]
            _audit(self.audit_log, "http", query, text, attempts)
            return text
        _audit(self.audit_log, "http", query, None, attempts, str(last))
        raise TransportError(f"giving up after {attempts} attempts: {last}", attempts)


class MockProvider:
    """Canned responses stored as ``<kind>-<digest>.txt`` files in one directory."""

    def __init__(self, directory: str | Path, audit_log: AuditLog | None = None):
        self.directory = Path(directory)
        self.audit_log = audit_log

    def path_for(self, query: QueryText) -> Path:
        return self.directory / f"{query.kind.value}-{query.digest}.txt"

    def send(self, query: QueryText) -> str:
        path = self.path_for(query)
        if not path.exists():
            _audit(self.audit_log, "mock", query, None, 1, "miss")
            raise MockMissError(query, path)
        text = path.read_text(encoding="utf-8")
        _audit(self.audit_log, "mock", query, text, 1)
        return text

    def record(self, query: QueryText, response: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path_for(query)
        path.write_text(response, encoding="utf-8")
        return path


def send(query: QueryText, config: ProviderConfig, audit_log: AuditLog | None = None) -> str:
    return HttpProvider(config, audit_log).send(query)


# -- response parsing -----------------------------------------------------------

_CWE_MENTION = re.compile(r"\bCWE[-‐-— ]?(\d+)\b", re.IGNORECASE)
_BULLET = re.compile(r"^\s*(?:[-*•+]|\d+[.)])\s*")
_SEP = re.compile(r"^\s*(?::|-|–|—)\s*")


def _norm_desc(desc: str) -> str:
    return " ".join(desc.lower().split())


def parse_cwe_list(text: str) -> list[CweCandidate]:
    out: list[CweCandidate] = []
    seen: set[tuple[str, str]] = set()
    for raw in text.splitlines():
        line = _BULLET.sub("", raw).strip()
        mentions = list(_CWE_MENTION.finditer(line))
        for i, m in enumerate(mentions):
            end = mentions[i + 1].start() if i + 1 < len(mentions) else len(line)
            rest = line[m.end():end]
            desc = _SEP.sub("", rest, count=1).strip() if _SEP.match(rest) else ""
            desc = desc.rstrip(",;").strip().strip("*").strip()
            cid = f"CWE-{int(m.group(1))}"
            key = (cid, _norm_desc(desc))
            if key in seen:
                continue
            seen.add(key)
            out.append(CweCandidate(cid, desc, len(out) + 1))
    return out


def render_cwe_list(candidates: list[CweCandidate]) -> str:
    return "\n".join(f"- {c.id}: {c.description}" if c.description else f"- {c.id}"
                     for c in candidates)


class Relevance(str, Enum):
    RELEVANT = "relevant"
    NOT_RELEVANT = "not_relevant"
    INDETERMINATE = "indeterminate"


_NEG_LEAD = re.compile(r"^(no|nope|not really)\b", re.IGNORECASE)
_POS_LEAD = re.compile(r"^(yes|yeah|yep|indeed|absolutely|certainly|correct)\b", re.IGNORECASE)
_NEG_CUES = ("not relevant", "irrelevant", "is not applicable", "not applicable", "unrelated",
             "does not apply", "isn't relevant", "not directly relevant")
_POS_CUES = ("is relevant", "are relevant", "highly relevant", "is applicable", "applies to")


def parse_relevance(text: str) -> Relevance:
    head = text.strip().lstrip("*#>- ").strip()
    if _NEG_LEAD.match(head):
        return Relevance.NOT_RELEVANT
    if _POS_LEAD.match(head):
        return Relevance.RELEVANT
    first = re.split(r"(?<=[.!?])\s", head, maxsplit=1)[0].lower()
    neg = any(c in first for c in _NEG_CUES)
    pos = any(c in first for c in _POS_CUES)
    if neg and not pos:
        return Relevance.NOT_RELEVANT
    if pos and not neg:
        return Relevance.RELEVANT
    return Relevance.INDETERMINATE


_FENCE = re.compile(r"^[ \t]*```[^\n]*\n(.*?)^[ \t]*```", re.DOTALL | re.MULTILINE)


def _indented_block(lines: list[str]) -> str | None:
    block: list[str] = []
    for line in lines:
        indented = line.startswith(("    ", "\t"))
        if indented and line.strip():
            block.append(line)
        elif block and not line.strip():
            block.append(line)
        elif block:
            break
    code = "\n".join(block).strip("\n")
    return textwrap.dedent(code) + "\n" if code else None


def extract_code_block(text: str) -> str:
    """First fenced block, else first indented block, else the property region."""
    m = _FENCE.search(text)
    if m:
        return m.group(1).rstrip() + "\n"
    lines = text.splitlines()
    code = _indented_block(lines)
    if code is not None:
        return code
    starts = [i for i, l in enumerate(lines) if re.match(r"\s*(module|property)\b", l)]
    ends = [i for i, l in enumerate(lines) if re.search(r"\bendproperty\b", l)]
    if starts and ends and ends[-1] >= starts[0]:
        stop = ends[-1]
        # keep the assert statement that usually follows endproperty
        for j in range(ends[-1] + 1, len(lines)):
            if not lines[j].strip():
                break
            stop = j
        return "\n".join(lines[starts[0]:stop + 1]) + "\n"
    raise NoCodeFoundError("response contains no code block")
