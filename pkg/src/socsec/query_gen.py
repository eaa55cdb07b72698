"""Prompt construction for the three LLM stages.

Templates are Jinja text files under ``socsec/data/templates``; pass
``template_dir`` to use edited copies without touching code.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import jinja2

from .spec_model import IpBlock, SocSpec

if TYPE_CHECKING:
    from .cwe_db import CweEntry
    from .llm_client import CweCandidate


class QueryKind(str, Enum):
    CWE_ENUMERATION = "cwe_enumeration"
    RELEVANCE_CHECK = "relevance_check"
    SVA_GENERATION = "sva_generation"


class MissingIpError(ValueError):
    pass


@dataclass(frozen=True)
class Assumption:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"assumption {self.id} has empty text")


@dataclass(frozen=True)
class QueryText:
    kind: QueryKind
    body: str
    context_digest: str

    @property
    def digest(self) -> str:
        """Key for the whole query; the mock provider files responses under it."""
        h = hashlib.sha256(f"{self.kind.value}\0{self.body}".encode("utf-8"))
        return h.hexdigest()[:16]


def load_assumptions(path=None) -> list[Assumption]:
    if path is None:
        text = resources.files("socsec.data").joinpath("assumptions.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return [Assumption(**a) for a in json.loads(text)]


def _env(template_dir=None) -> jinja2.Environment:
    if template_dir is None:
        loader: jinja2.BaseLoader = jinja2.PackageLoader("socsec", "data/templates")
    else:
        loader = jinja2.FileSystemLoader(str(template_dir))
    return jinja2.Environment(loader=loader, undefined=jinja2.StrictUndefined,
                              keep_trailing_newline=True, autoescape=False)


_ENV = _env()


def _render(kind: QueryKind, template_dir=None, **values) -> str:
    env = _ENV if template_dir is None else _env(template_dir)
    return env.get_template(f"{kind.value}.txt").render(**values).rstrip("\n")


def _hex(v: int) -> str:
    return f"0x{v:08X}"


def render_soc_config(spec: SocSpec) -> str:
    bus = spec.bus_interface
    lines = [
        f"SoC: {spec.name} ({spec.type}; {spec.usage})",
        f"Bus protocol: {spec.bus_protocol}",
        f"Bus interface: {bus.interface_name}, {bus.num_ports} ports"
        + (f" ({', '.join(bus.signal_names)})" if bus.signal_names else ""),
        f"Masters: {spec.num_masters}; Slaves: {spec.num_slaves}",
    ]
    for ip in spec.ips:
        name = f"{ip.abbreviation} ({ip.name})" if ip.abbreviation else ip.name
        parts = [f"operation {ip.operation}", f"type {ip.description}",
                 f"address range {_hex(ip.address_range.low)}-{_hex(ip.address_range.high)}",
                 f"base {_hex(ip.base_address)}"]
        if ip.protected_range:
            parts.append(f"protected {_hex(ip.protected_range.low)}-{_hex(ip.protected_range.high)}")
        lines.append(f"- {ip.role.value} {name}: " + "; ".join(parts))
    return "\n".join(lines)


def _context_digest(config: str) -> str:
    return hashlib.sha256(config.encode("utf-8")).hexdigest()[:16]


def cwe_enumeration_query(spec: SocSpec, assumptions: Sequence[Assumption] = (),
                          template_dir=None) -> QueryText:
    config = render_soc_config(spec)
    block = ""
    if assumptions:
        block = "Assumptions:\n" + "".join(f"- {a.text}\n" for a in assumptions)
    body = _render(QueryKind.CWE_ENUMERATION, template_dir, soc_config=config, assumptions=block)
    return QueryText(QueryKind.CWE_ENUMERATION, body, _context_digest(config))


def relevance_query(candidate: "CweCandidate", spec: SocSpec, template_dir=None) -> QueryText:
    config = render_soc_config(spec)
    body = _render(QueryKind.RELEVANCE_CHECK, template_dir, cwe_id=candidate.id,
                   cwe_desc=candidate.description.strip(), soc_config=config)
    return QueryText(QueryKind.RELEVANCE_CHECK, body, _context_digest(config))


def ip_context(ip: IpBlock, spec: SocSpec) -> str:
    lines = [f"Target IP: {ip.label} ({ip.name}), operation {ip.operation}"]
    signals = ip.signals or spec.bus_interface.signal_names
    if signals:
        lines.append("Signal names: " + ", ".join(signals))
    if ip.protected_range:
        lines.append(f"Protected address range: 32'h{ip.protected_range.low:08X} to "
                     f"32'h{ip.protected_range.high:08X}")
    return "\n".join(lines)


def sva_generation_query(entry: "CweEntry", spec: SocSpec, ip: IpBlock | None = None,
                         template_dir=None) -> QueryText:
    if ip is None and entry.is_ip and not entry.is_bus:
        raise MissingIpError(f"{entry.cwe_id} is IP-level only; an IP must be given")
    ctx = ip_context(ip, spec) if ip is not None else ""
    body = _render(QueryKind.SVA_GENERATION, template_dir, cwe_id=entry.cwe_id,
                   bus_protocol=spec.bus_protocol, ip_context=ctx)
    return QueryText(QueryKind.SVA_GENERATION, body, _context_digest(render_soc_config(spec)))
