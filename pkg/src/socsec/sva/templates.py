"""Offline assertion patterns, one per violation type, bound to spec names.

Bus-level assertions refer to IP signals by their flattened names
(``slave_<label>_<signal>``), the same names the central RTL module uses.
"""
from __future__ import annotations

import re

from ..cwe_db import CweEntry, ViolationType, id_number
from ..spec_model import IpBlock, Role, SocSpec
from .ast import AssertionUnit
from .parser import parse_assertion

DEFAULT_KEY = 0xABCD1234


class NoTemplateError(ValueError):
    pass


def flat_name(ip: IpBlock, signal: str) -> str:
    return f"{ip.role.value}_{ip.label}_{signal}"


def _pick(signals: tuple[str, ...], needles: tuple[str, ...], default: str) -> str:
    for needle in needles:
        for s in signals:
            if needle in s.lower():
                return s
    return default


def _slaves(spec: SocSpec) -> list[IpBlock]:
    return [ip for ip in spec.ips if ip.role is Role.SLAVE]


def _ident(text: str) -> str:
    return re.sub(r"\W+", "_", text).strip("_").lower()


def _names(entry: CweEntry, ip: IpBlock | None, stem: str) -> tuple[str, str]:
    suffix = f"cwe{id_number(entry.cwe_id)}" + (f"_{_ident(ip.label)}" if ip else "")
    return f"p_{stem}_{suffix}", f"a_{stem}_{suffix}"


def _unit(prop: str, label: str, clock: str, body: str, message: str) -> AssertionUnit:
    text = (f"property {prop};\n    @(posedge {clock}) {body};\nendproperty\n"
            f"{label}: assert property ({prop})\n    else $error(\"{message}\");\n")
    return parse_assertion(text)


def _clock(spec: SocSpec, ip: IpBlock | None) -> str:
    sigs = ip.signals if ip else ()
    return _pick(sigs + spec.bus_interface.signal_names, ("clk", "clock"), "clk_i")


def _reset(spec: SocSpec, ip: IpBlock | None) -> str:
    sigs = ip.signals if ip else ()
    return _pick(sigs + spec.bus_interface.signal_names, ("rst", "reset"), "rst_i")


def _access_control(entry: CweEntry, ip: IpBlock | None, spec: SocSpec) -> AssertionUnit:
    owner = ip
    if owner is None:
        owner = next((s for s in _slaves(spec) if s.protected_range), None)
        if owner is None:
            raise NoTemplateError("access_control needs an IP with a protected address range")
    rng = owner.protected_range or owner.address_range
    addr = _pick(owner.signals, ("adr", "addr"), "addr")
    start = _pick(owner.signals, ("start", "req"), "start")
    if ip is None:
        addr, start = flat_name(owner, addr), flat_name(owner, start)
    prop, label = _names(entry, ip, "access_control")
    body = f"$rose({start}) |-> ({addr} >= 32'h{rng.low:08X} && {addr} <= 32'h{rng.high:08X})"
    return _unit(prop, label, _clock(spec, owner), body,
                 f"{entry.cwe_id}: access outside the {owner.label} protected range")


def _information_flow(entry: CweEntry, ip: IpBlock | None, spec: SocSpec) -> AssertionUnit:
    owner = ip
    if owner is None:
        slaves = _slaves(spec)
        owner = next((s for s in slaves if "crypt" in s.operation.lower()), slaves[0] if slaves else None)
        if owner is None:
            raise NoTemplateError("information_flow needs at least one slave IP")
    key = _pick(owner.signals, ("key",), "key")
    start = _pick(owner.signals, ("start", "req"), "start")
    if ip is None:
        key, start = flat_name(owner, key), flat_name(owner, start)
    prop, label = _names(entry, ip, "information_flow")
    body = f"$rose({start}) |-> ({key} != 32'h{DEFAULT_KEY:08X})"
    return _unit(prop, label, _clock(spec, owner), body,
                 f"{entry.cwe_id}: key has been left at a default value")


def _liveness(entry: CweEntry, ip: IpBlock | None, spec: SocSpec) -> AssertionUnit:
    # two bus agents must not hold the shared resource in the same cycle
    slaves = _slaves(spec)
    first = ip or (slaves[0] if slaves else None)
    second = next((s for s in slaves if s is not first), None)
    if first is None or second is None:
        raise NoTemplateError("liveness pattern needs two slave IPs")
    rst = _reset(spec, ip)
    prop, label = _names(entry, ip, "no_race_condition")
    body = (f"(!{rst}) |-> !({flat_name(first, 'access')} && {flat_name(second, 'access')})")
    return _unit(prop, label, _clock(spec, ip), body,
                 f"{entry.cwe_id}: violation of no race condition rule")


def _toctou(entry: CweEntry, ip: IpBlock | None, spec: SocSpec) -> AssertionUnit:
    owner = ip
    if owner is None:
        slaves = _slaves(spec)
        if not slaves:
            raise NoTemplateError("toctou pattern needs a slave IP")
        owner = slaves[0]
    release, reg = "release", "sensitive_register"
    rst = _reset(spec, owner)
    if ip is None:
        release, reg = flat_name(owner, release), flat_name(owner, reg)
    prop, label = _names(entry, ip, "sensitive_register_clear")
    body = f"({release} && !{rst}) |-> ({reg} === 32'b0)"
    return _unit(prop, label, _clock(spec, owner), body,
                 f"{entry.cwe_id}: violation of sensitive register clear rule")


_TEMPLATES = {
    ViolationType.ACCESS_CONTROL: _access_control,
    ViolationType.INFORMATION_FLOW: _information_flow,
    ViolationType.LIVENESS: _liveness,
    ViolationType.TOCTOU: _toctou,
}


def instantiate_template(entry: CweEntry, ip: IpBlock | None, spec: SocSpec) -> AssertionUnit:
    build = _TEMPLATES.get(entry.violation_type)
    if build is None:
        raise NoTemplateError(f"no assertion pattern for violation type {entry.violation_type.value} "
                              f"({entry.cwe_id})")
    return build(entry, ip, spec)
