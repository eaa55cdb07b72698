"""Assertion to ``<predicate, timing, action>`` security policy translation.

Actions use a small statement language, one ``target = value;`` per
assignment. Targets are bare signal names or IP-qualified references
written ``slave['SPI'].w_data`` (backtick or double quotes also accepted).
Qualified references are flattened to ``slave_SPI_w_data`` wherever an
identifier is needed.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .cwe_db import CweEntry, canonical_id
from .cwe_filter import matching_ips
from .spec_model import IpBlock, SocSpec
from .sva.ast import AssertionUnit, BooleanProp, Edge, ImplOp, SeqTerm
from .sva.lexer import SvaSyntaxError, tokenize
from .sva.parser import canonical_expr


class PolicyError(ValueError):
    pass


class ActionParseError(PolicyError):
    pass


class EmptyPropertyError(PolicyError):
    pass


class PolicyFormatError(PolicyError):
    pass


class UnresolvableSignalError(PolicyError):
    def __init__(self, names: Sequence[str]):
        super().__init__("signal(s) match no IP and no bus signal: " + ", ".join(names))
        self.names = tuple(names)


@dataclass(frozen=True)
class PredicateAtom:
    kind: str  # "expression" or "delay"
    expr: str | None = None
    cycles: int | None = None

    def __post_init__(self) -> None:
        if self.kind == "expression":
            if not self.expr or self.cycles is not None:
                raise PolicyError("expression atom needs text and no cycle count")
        elif self.kind == "delay":
            if self.cycles is None or self.cycles < 1 or self.expr is not None:
                raise PolicyError("delay atom needs cycles >= 1 and no text")
        else:
            raise PolicyError(f"unknown atom kind {self.kind!r}")

    @classmethod
    def expression(cls, text: str) -> "PredicateAtom":
        return cls("expression", expr=text)

    @classmethod
    def delay(cls, cycles: int) -> "PredicateAtom":
        return cls("delay", cycles=cycles)

    def __str__(self) -> str:
        return self.expr if self.kind == "expression" else f"##{self.cycles}##"


@dataclass(frozen=True)
class TimingSpec:
    clock: tuple[Edge | None, str] | None = None
    reset: tuple[Edge, str] | None = None
    mode: int = 0

    def __post_init__(self) -> None:
        if self.mode < 0:
            raise PolicyError("mode must be >= 0")


@dataclass(frozen=True)
class SignalAssignment:
    target: str
    value: str


class Level(str, Enum):
    BUS = "bus_level"
    IP = "ip_level"


@dataclass(frozen=True)
class Placement:
    level: Level
    ip: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "level", Level(self.level))
        if (self.level is Level.IP) != (self.ip is not None):
            raise PolicyError("ip_level placement names exactly one IP; bus_level names none")


@dataclass(frozen=True)
class SecurityPolicy:
    predicate: tuple[PredicateAtom, ...]
    timing: TimingSpec
    action: tuple[SignalAssignment, ...]
    source_cwe: str | None = None
    placement: Placement | None = None

    def __post_init__(self) -> None:
        if not self.predicate:
            raise PolicyError("predicate must be non-empty")
        for i, atom in enumerate(self.predicate):
            want = "expression" if i % 2 == 0 else "delay"
            if atom.kind != want:
                raise PolicyError("predicate must alternate expression and delay atoms, "
                                  "starting and ending with an expression")
        if self.predicate[-1].kind != "expression":
            raise PolicyError("predicate cannot end with a delay")
        if not self.action:
            raise PolicyError("action must contain at least one assignment")
        if self.source_cwe is not None:
            object.__setattr__(self, "source_cwe", canonical_id(self.source_cwe))

    @property
    def expressions(self) -> list[str]:
        return [a.expr for a in self.predicate if a.kind == "expression"]

    @property
    def is_sequential(self) -> bool:
        return len(self.predicate) > 1


# -- qualified references ------------------------------------------------------------

_QUALIFIED = re.compile(r"""\b(slave|master)\s*\[\s*[`'"]\s*([^`'"\]]+?)\s*['"`]\s*\]\s*\.\s*([A-Za-z_]\w*)""")


def _flat(m: re.Match) -> str:
    ref = re.sub(r"\W+", "_", m.group(2))
    return f"{m.group(1)}_{ref}_{m.group(3)}"


def flatten_refs(text: str) -> str:
    """``slave['SPI'].w_data`` -> ``slave_SPI_w_data``."""
    return _QUALIFIED.sub(_flat, text)


def _canonical_target(text: str) -> str:
    t = text.strip()
    m = _QUALIFIED.fullmatch(t)
    if m:
        return f"{m.group(1)}['{m.group(2)}'].{m.group(3)}"
    if re.fullmatch(r"[A-Za-z_]\w*", t):
        return t
    raise ActionParseError(f"bad assignment target {text!r}")


def parse_action(text: str) -> tuple[SignalAssignment, ...]:
    """Parse ``target = value;`` statements (the last ``;`` is optional)."""
    stmts = [s.strip() for s in text.split(";")]
    if stmts and not stmts[-1]:
        stmts.pop()
    if not stmts:
        raise ActionParseError("action is empty")
    out = []
    for s in stmts:
        if not s:
            raise ActionParseError("empty statement in action")
        m = re.fullmatch(r"(.+?)(?<![=!<>])=(?!=)(.+)", s, re.DOTALL)
        if not m:
            raise ActionParseError(f"expected 'target = value' in {s!r}")
        target = _canonical_target(m.group(1))
        try:
            value = canonical_expr(m.group(2).strip())
        except SvaSyntaxError as exc:
            raise ActionParseError(f"bad value in {s!r}: {exc}") from None
        out.append(SignalAssignment(target, value))
    return tuple(out)


def render_action(action: Sequence[SignalAssignment]) -> str:
    return " ".join(f"{a.target} = {a.value};" for a in action)


# -- translation ---------------------------------------------------------------------

def _steps(terms: tuple[SeqTerm, ...], lead: int | None) -> list[tuple[str, int | None]]:
    return [(t.expr, lead if i == 0 else t.delay) for i, t in enumerate(terms)]


def assertion_to_policy(unit: AssertionUnit, action_input: str, spec: SocSpec | None = None,
                        source_cwe: str | None = None, mode: int = 0) -> SecurityPolicy:
    body = unit.property_body
    atoms: list[PredicateAtom] = []
    if isinstance(body, BooleanProp):
        if not body.expr.strip():
            raise EmptyPropertyError(f"{unit.property_name} has an empty property")
        atoms.append(PredicateAtom.expression(body.expr))
    else:
        lead = body.consequent[0].delay
        if body.operator is ImplOp.NON_OVERLAPPED:
            lead = (lead or 0) + 1  # a |=> b is a |-> ##1 b
        steps = _steps(body.antecedent, None) + _steps(body.consequent, lead)
        fused: list[tuple[str, int | None]] = []
        for expr, delay in steps:
            if fused and delay == 0:
                # ##0 means the same cycle: conjoin instead of emitting a zero delay
                prev, d = fused[-1]
                fused[-1] = (f"({prev}) && ({expr})", d)
            else:
                fused.append((expr, delay))
        for i, (expr, delay) in enumerate(fused):
            if i > 0:
                atoms.append(PredicateAtom.delay(delay if delay is not None else 1))
            atoms.append(PredicateAtom.expression(expr))
    clock = reset = None
    if unit.clocking is not None:
        clock = (unit.clocking.edge, unit.clocking.signal)
    if unit.reset is not None:
        reset = unit.reset
    action = parse_action(action_input)
    return SecurityPolicy(tuple(atoms), TimingSpec(clock, reset, mode), action, source_cwe)


# -- placement -----------------------------------------------------------------------

_CLOCK_RESET = re.compile(r"^(a?clk|clock|a?rst|a?reset|rstn|resetn)", re.IGNORECASE)


def _squash(name: str) -> str:
    return name.replace("_", "").lower()


def resolve_qualified(name: str, spec: SocSpec) -> tuple[IpBlock, str] | None:
    """Split a flattened ``slave_<ref>_<signal>`` name into (IP, signal)."""
    m = re.match(r"(slave|master)_(.+)$", name)
    if not m:
        return None
    rest = m.group(2)
    for i, ch in enumerate(rest):
        if ch != "_" or i == 0:
            continue
        ip = spec.find_ip(rest[:i])
        if ip is not None and i + 1 < len(rest) and ip.role.value == m.group(1):
            return ip, rest[i + 1:]
    return None


def referenced_names(policy: SecurityPolicy) -> list[str]:
    names: list[str] = []
    texts = [flatten_refs(e) for e in policy.expressions]
    texts += [flatten_refs(a.target) for a in policy.action]
    texts += [flatten_refs(a.value) for a in policy.action]
    for text in texts:
        toks = tokenize(text)
        for i, tok in enumerate(toks):
            if tok.kind != "ident":
                continue
            if i + 1 < len(toks) and toks[i + 1].is_op("("):
                continue
            if i > 0 and toks[i - 1].is_op("."):
                continue
            names.append(tok.value)
    return list(dict.fromkeys(names))


@dataclass(frozen=True)
class SignalRefs:
    ips: tuple[str, ...]
    bus: tuple[str, ...]
    unresolved: tuple[str, ...]


def resolve_signals(policy: SecurityPolicy, spec: SocSpec, entry: CweEntry | None = None,
                    ip_hint: IpBlock | None = None) -> SignalRefs:
    bus_names = {_squash(s): s for s in spec.bus_interface.signal_names}
    entry_ips = set(matching_ips(entry, spec.ips)) if entry is not None and entry.is_ip else set()
    ips: list[str] = []
    bus: list[str] = []
    unresolved: list[str] = []
    for name in referenced_names(policy):
        if _CLOCK_RESET.match(name):
            continue
        q = resolve_qualified(name, spec)
        if q is not None:
            ips.append(q[0].name)
            continue
        if _squash(name) in bus_names:
            bus.append(name)
            continue
        owners = [ip for ip in spec.ips if name in ip.signals]
        if ip_hint is not None and (ip_hint in owners or not ip_hint.signals):
            ips.append(ip_hint.name)
        elif len(owners) == 1:
            ips.append(owners[0].name)
        elif owners and len([o for o in owners if o.name in entry_ips]) == 1:
            ips.append(next(o.name for o in owners if o.name in entry_ips))
        else:
            unresolved.append(name)
    return SignalRefs(tuple(dict.fromkeys(ips)), tuple(dict.fromkeys(bus)), tuple(unresolved))


def classify_placement(policy: SecurityPolicy, entry: CweEntry | None, spec: SocSpec,
                       ip_hint: IpBlock | None = None) -> SecurityPolicy:
    refs = resolve_signals(policy, spec, entry, ip_hint)
    forced_bus = entry is not None and entry.is_bus and not entry.is_ip
    if refs.unresolved and not forced_bus:
        raise UnresolvableSignalError(refs.unresolved)
    if forced_bus or refs.bus or len(refs.ips) > 1:
        placement = Placement(Level.BUS)
    elif len(refs.ips) == 1:
        placement = Placement(Level.IP, refs.ips[0])
    elif entry is not None and not entry.is_bus and ip_hint is not None:
        placement = Placement(Level.IP, ip_hint.name)
    else:
        placement = Placement(Level.BUS)
    return SecurityPolicy(policy.predicate, policy.timing, policy.action, policy.source_cwe, placement)


# -- document codec ------------------------------------------------------------------

def serialize_policy(policy: SecurityPolicy) -> dict:
    t = policy.timing
    doc: dict = {
        "predicate": [{"expr": a.expr} if a.kind == "expression" else {"delay_cycles": a.cycles}
                      for a in policy.predicate],
        "timing": {
            "clock_edge": t.clock[0].value if t.clock and t.clock[0] else None,
            "clock_signal": t.clock[1] if t.clock else None,
            "reset_edge": t.reset[0].value if t.reset else None,
            "reset_signal": t.reset[1] if t.reset else None,
            "mode": t.mode,
        },
        "action": [{"target": a.target, "value": a.value} for a in policy.action],
    }
    if policy.source_cwe is not None:
        doc["source_cwe"] = policy.source_cwe
    if policy.placement is not None:
        doc["placement"] = {"level": policy.placement.level.value}
        if policy.placement.ip is not None:
            doc["placement"]["ip"] = policy.placement.ip
    return doc


def _edge(value, what: str) -> Edge | None:
    if value is None:
        return None
    try:
        return Edge(value)
    except ValueError:
        raise PolicyFormatError(f"{what}: {value!r} is not posedge/negedge") from None


def parse_policy(doc: dict) -> SecurityPolicy:
    try:
        atoms = []
        for item in doc["predicate"]:
            if set(item) == {"expr"}:
                atoms.append(PredicateAtom.expression(item["expr"]))
            elif set(item) == {"delay_cycles"}:
                cycles = item["delay_cycles"]
                if not isinstance(cycles, int) or isinstance(cycles, bool):
                    raise PolicyFormatError("delay_cycles must be an integer")
                atoms.append(PredicateAtom.delay(cycles))
            else:
                raise PolicyFormatError(f"predicate item {item!r} is neither expr nor delay_cycles")
        t = doc["timing"]
        clock = None
        if t.get("clock_signal") is not None:
            clock = (_edge(t.get("clock_edge"), "clock_edge"), t["clock_signal"])
        reset = None
        if t.get("reset_signal") is not None:
            edge = _edge(t.get("reset_edge"), "reset_edge")
            if edge is None:
                raise PolicyFormatError("reset_signal needs reset_edge")
            reset = (edge, t["reset_signal"])
        mode = t.get("mode", 0)
        if not isinstance(mode, int) or isinstance(mode, bool):
            raise PolicyFormatError("mode must be an integer")
        action = tuple(SignalAssignment(a["target"], a["value"]) for a in doc["action"])
        placement = None
        if "placement" in doc:
            p = doc["placement"]
            placement = Placement(Level(p["level"]), p.get("ip"))
        return SecurityPolicy(tuple(atoms), TimingSpec(clock, reset, mode), action,
                              doc.get("source_cwe"), placement)
    except PolicyFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyFormatError(f"bad policy document: {exc}") from None


def dumps_policies(policies: Sequence[SecurityPolicy]) -> str:
    return json.dumps([serialize_policy(p) for p in policies], indent=2, sort_keys=True) + "\n"


def loads_policies(text: str) -> list[SecurityPolicy]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PolicyFormatError(f"policy file is not JSON: {exc}") from None
    if isinstance(data, dict):
        data = [data]
    return [parse_policy(d) for d in data]
