"""Policy enforcement RTL: one central bus-level module plus per-IP wrappers.

Every overridden signal ``X`` enters as ``X_in`` and leaves as ``X``. A
single combinational block copies inputs to outputs and then applies the
policies in source-CWE order, so when two policies drive the same signal
the later one wins. Delay atoms and sampled-value functions are realised
with flops on the policy clock.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..cwe_db import id_number
from ..policy import Level, SecurityPolicy, flatten_refs, resolve_qualified
from ..spec_model import IpBlock, SocSpec
from ..sva.ast import Edge
from .expr import (LoweringError, Node, Sampler, comparison_widths, emit, identifiers,
                   literal_width, parse_expr)

log = logging.getLogger(__name__)

CENTRAL_MODULE = "security_module"
DEFAULT_CLOCK = "clk"
DEFAULT_RESET = "rst"
IND = "    "

VERILOG_RESERVED = frozenset("""
always and assign automatic begin buf bufif0 bufif1 case casex casez cell cmos config deassign
default defparam design disable edge else end endcase endconfig endfunction endgenerate endmodule
endprimitive endspecify endtable endtask event for force forever fork function generate genvar
highz0 highz1 if ifnone incdir include initial inout input instance integer join large liblist
library localparam macromodule medium module nand negedge nmos nor noshowcancelled not notif0
notif1 or output parameter pmos posedge primitive pull0 pull1 pulldown pullup pulsestyle_ondetect
pulsestyle_onevent rcmos real realtime reg release repeat rnmos rpmos rtran rtranif0 rtranif1
scalared showcancelled signed small specify specparam strong0 strong1 supply0 supply1 table task
time tran tranif0 tranif1 tri tri0 tri1 triand trior trireg unsigned use uwire vectored wait wand
weak0 weak1 while wire wor xnor xor
""".split())


def vid(name: str) -> str:
    """Verilog spelling of ``name``: reserved words become escaped identifiers."""
    return f"\\{name} " if name in VERILOG_RESERVED else name


def _plain(name: str) -> str:
    return name[1:].rstrip() if name.startswith("\\") else name


def _suffixed(name: str, suffix: str) -> str:
    return _plain(name) + suffix


class CodegenError(ValueError):
    pass


class UnresolvedSignalError(CodegenError):
    pass


class PortConflictError(CodegenError):
    pass


class UnknownPortError(CodegenError):
    pass


@dataclass(frozen=True)
class RtlPort:
    direction: str  # input / output
    width: int
    name: str
    reg: bool = False

    def decl(self) -> str:
        rng = f" [{self.width - 1}:0]" if self.width > 1 else ""
        net = "reg" if self.reg else "wire"
        return f"{self.direction} {net}{rng} {self.name}"


@dataclass
class RtlArtifact:
    kind: str  # central_module / ip_wrapper
    module_name: str
    port_list: list[RtlPort]
    body: str  # complete module text
    policies_included: list[str] = field(default_factory=list)
    ip_name: str | None = None
    warnings: list[str] = field(default_factory=list)
    signal_map: list[tuple[str, str, str]] = field(default_factory=list)  # (flat, reference, direction)

    @property
    def file_name(self) -> str:
        return f"{self.module_name}.v"


def sanitize(name: str) -> str:
    s = re.sub(r"\W+", "_", name).strip("_")
    return s if re.match(r"[A-Za-z_]", s) else f"ip_{s}"


def _policy_order(policies: Sequence[SecurityPolicy]) -> list[SecurityPolicy]:
    return sorted(policies, key=lambda p: id_number(p.source_cwe) if p.source_cwe else 1 << 30)


def _vrange(width: int) -> str:
    return f"[{width - 1}:0] " if width > 1 else ""


@dataclass
class _Lowered:
    policy: SecurityPolicy
    tag: str
    guard: str
    assigns: list[tuple[str, str]]
    regs: list[tuple[str, int]]          # sequential state (name, width)
    seq_lines: list[str]                 # nonblocking updates
    clock: tuple[Edge, str] | None
    reset: tuple[Edge, str] | None
    names: list[str]


class _Builder:
    """Shared lowering for the central module and the wrappers."""

    def __init__(self, rename=lambda n: n):
        self.rename = lambda n: vid(rename(n))
        self.widths: dict[str, int] = {}
        self.warnings: list[str] = []

    def _parse(self, text: str) -> Node:
        try:
            node = parse_expr(flatten_refs(text))
        except LoweringError as exc:
            raise CodegenError(str(exc)) from None
        return self._rename(node)

    def _rename(self, node: Node) -> Node:
        if node.kind == "ident":
            return Node("ident", self.rename(node.text))
        return Node(node.kind, node.text, [self._rename(k) for k in node.kids])

    def lower(self, policy: SecurityPolicy, index: int) -> _Lowered:
        tag = f"p{index}"
        exprs = [self._parse(e) for e in policy.expressions]
        delays = [a.cycles for a in policy.predicate if a.kind == "delay"]
        for n in exprs:
            for k, w in comparison_widths(n).items():
                self.widths.setdefault(k, w)
        assigns = []
        for a in policy.action:
            target = self.rename(flatten_refs(a.target))
            value_node = self._parse(a.value)
            w = literal_width(a.value)
            if w:
                known = self.widths.setdefault(target, w)
                if known != w:
                    self.warnings.append(f"{policy.source_cwe or tag}: {target} is {known} bits "
                                         f"but is assigned a {w}-bit value")
            assigns.append((target, value_node))
        names = [n for e in exprs for n in identifiers(e)]
        names += [n for _, v in assigns for n in identifiers(v)]
        clock = None
        if policy.timing.clock is not None:
            clock = (policy.timing.clock[0] or Edge.POSEDGE, self.rename(policy.timing.clock[1]))
        reset = None
        if policy.timing.reset is not None:
            reset = (policy.timing.reset[0], self.rename(policy.timing.reset[1]))
        needs_clock = bool(delays)
        sampler = Sampler(f"{tag}_smp")
        try:
            texts = [emit(e, sampler, self.widths) for e in exprs]
            values = [(t, emit(v, None, self.widths)) for t, v in assigns]
        except LoweringError as exc:
            raise CodegenError(f"{policy.source_cwe or tag}: {exc}") from None
        needs_clock = needs_clock or bool(sampler.regs)
        if needs_clock and clock is None:
            clock = (Edge.POSEDGE, DEFAULT_CLOCK)
        regs: list[tuple[str, int]] = []
        seq: list[str] = []
        for name, src, width in sampler.regs:
            regs.append((name, width))
            seq.append(f"{name} <= {src};")
        # one-hot shift registers carry the partial match across each delay
        guard = texts[0]
        for j, (d, nxt) in enumerate(zip(delays, texts[1:])):
            stages = [f"{tag}_s{j}_{k}" for k in range(d)]
            regs.extend((s, 1) for s in stages)
            seq.append(f"{stages[0]} <= {guard};")
            for a, b in zip(stages, stages[1:]):
                seq.append(f"{b} <= {a};")
            guard = f"{stages[-1]} && ({nxt})"
        return _Lowered(policy, tag, guard, values, regs, seq, clock, reset,
                        list(dict.fromkeys([*names, *(t for t, _ in assigns)])))


def _seq_block(low: _Lowered) -> list[str]:
    if not low.seq_lines:
        return []
    edge, clk = low.clock
    lines = []
    if low.reset is not None:
        r_edge, rst = low.reset
        active = rst if r_edge is Edge.POSEDGE else f"!{rst}"
        lines.append(f"{IND}always @({edge.value} {clk} or {r_edge.value} {rst}) begin")
        lines.append(f"{IND * 2}if ({active}) begin")
        lines += [f"{IND * 3}{name} <= {w}'d0;" for name, w in low.regs]
        lines.append(f"{IND * 2}end else begin")
        lines += [IND * 3 + s for s in low.seq_lines]
        lines.append(f"{IND * 2}end")
    else:
        lines.append(f"{IND}always @({edge.value} {clk}) begin")
        lines += [IND * 2 + s for s in low.seq_lines]
    lines.append(f"{IND}end")
    return lines


def _comb_block(lowered: list[_Lowered], defaults: list[tuple[str, str]]) -> list[str]:
    if not defaults:
        return []
    lines = [f"{IND}always @(*) begin"]
    lines += [f"{IND * 2}{out} = {src};" for out, src in defaults]
    for low in lowered:
        lines.append(f"{IND * 2}// {low.policy.source_cwe or low.tag}")
        lines.append(f"{IND * 2}if({low.guard}) begin")
        lines += [f"{IND * 3}{t} = {v};" for t, v in low.assigns]
        lines.append(f"{IND * 2}end")
    lines.append(f"{IND}end")
    return lines


def _header(title: str, lowered: list[_Lowered]) -> list[str]:
    ids = [low.policy.source_cwe or low.tag for low in lowered]
    lines = [f"// {title}", "// Generated policy enforcement logic."]
    lines.append("// Policies: " + (", ".join(ids) if ids else "none"))
    if lowered:
        lines.append("// Overridden signals pass through unless a policy fires; policies apply in")
        lines.append("// source CWE order, so the last matching policy wins for a shared signal.")
    return lines


def _module(name: str, ports: list[RtlPort], items: list[str], header: list[str]) -> str:
    lines = list(header)
    if ports:
        lines.append(f"module {name} (")
        lines.append(",\n".join(IND + p.decl() for p in ports))
        lines.append(");")
    else:
        lines.append(f"module {name};")
    lines += items
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def _check_resolvable(low: _Lowered, spec: SocSpec) -> None:
    bus = {s.replace("_", "").lower() for s in spec.bus_interface.signal_names}
    ip_signals = {s for ip in spec.ips for s in ip.signals}
    bad = [n for n in map(_plain, low.names)
           if resolve_qualified(n, spec) is None and n.replace("_", "").lower() not in bus
           and n not in ip_signals]
    if bad:
        raise UnresolvedSignalError(f"{low.policy.source_cwe or low.tag}: no IP or bus signal "
                                    f"named {', '.join(bad)}")


def policy_to_logic(policy: SecurityPolicy, spec: SocSpec | None = None) -> str:
    """Stand-alone fragment for one policy (sequential block, then the guarded block)."""
    b = _Builder()
    low = b.lower(policy, 0)
    if spec is not None:
        _check_resolvable(low, spec)
    defaults = [(t, _suffixed(t, "_in")) for t, _ in low.assigns]
    return "\n".join(_seq_block(low) + _comb_block([low], defaults)) + "\n"


def build_central_module(policies: Sequence[SecurityPolicy], spec: SocSpec) -> RtlArtifact:
    for p in policies:
        if p.placement is not None and p.placement.level is not Level.BUS:
            raise CodegenError(f"{p.source_cwe}: ip-level policy given to the central module")
    ordered = _policy_order(policies)
    b = _Builder()
    lowered = [b.lower(p, i) for i, p in enumerate(ordered)]
    for low in lowered:
        _check_resolvable(low, spec)
    targets = list(dict.fromkeys(t for low in lowered for t, _ in low.assigns))
    observed = [n for low in lowered for n in low.names if n not in targets]
    clocks = list(dict.fromkeys(low.clock[1] for low in lowered if low.clock))
    resets = list(dict.fromkeys(low.reset[1] for low in lowered if low.reset))
    if not clocks:
        clocks = [next((n for n in observed if re.match(r"(a?clk|clock)", n, re.I)), DEFAULT_CLOCK)]
    if not resets:
        resets = [next((n for n in observed if re.match(r"(a?rst|a?reset)", n, re.I)), DEFAULT_RESET)]
    bus_names = {s.lower(): s for s in spec.bus_interface.signal_names}
    ports: list[RtlPort] = []
    seen: dict[str, str] = {}

    def add(port: RtlPort) -> None:
        prev = seen.get(port.name)
        if prev is not None:
            if prev != port.direction:
                raise PortConflictError(f"{port.name} is both {prev} and {port.direction}")
            return
        seen[port.name] = port.direction
        ports.append(port)

    for name in [*clocks, *resets]:
        add(RtlPort("input", 1, name))
    for name in dict.fromkeys(observed):
        if name in clocks or name in resets:
            continue
        add(RtlPort("input", b.widths.get(name, 1), name))
    for t in targets:
        t_in = _suffixed(t, "_in")
        if t_in in seen:
            raise PortConflictError(f"{t_in} collides with an observed signal")
        add(RtlPort("input", b.widths.get(t, 1), t_in))
        add(RtlPort("output", b.widths.get(t, 1), t, reg=True))

    items: list[str] = []
    for low in lowered:
        for name, w in low.regs:
            items.append(f"{IND}reg {_vrange(w)}{name};")
    for low in lowered:
        items += _seq_block(low)
    items += _comb_block(lowered, [(t, _suffixed(t, "_in")) for t in targets])
    text = _module(CENTRAL_MODULE, ports, items, _header("Central bus-level security module", lowered))

    in_of = {_suffixed(t, "_in"): t for t in targets}
    smap = []
    for p in ports:
        ref = _plain(in_of.get(p.name, p.name) if p.direction == "input" else p.name)
        q = resolve_qualified(ref, spec)
        if q is not None:
            reference = f"{q[0].role.value}['{q[0].label}'].{q[1]}"
        elif ref.lower() in bus_names:
            reference = f"bus.{bus_names[ref.lower()]}"
        else:
            reference = ref
        smap.append((p.name, reference, p.direction))
    return RtlArtifact("central_module", CENTRAL_MODULE, ports, text,
                       [low.policy.source_cwe or low.tag for low in lowered], None, b.warnings, smap)


def default_inner_ports(ip: IpBlock, policies: Sequence[SecurityPolicy] = ()) -> list[RtlPort]:
    """Ports of the wrapped IP from its SIGNALS list; ``*_o``/``*_out`` are outputs."""
    names = list(ip.signals)
    if not names:
        # no declared signals: expose what the policies touch
        b = _Builder(rename=lambda n: _local_name(n, ip))
        for i, p in enumerate(policies):
            low = b.lower(p, i)
            names += [spec[1] for spec in (low.clock, low.reset) if spec] + low.names
        names = list(dict.fromkeys(names))
    out = []
    for n in names:
        direction = "output" if re.search(r"(_o|_out)$", n) else "input"
        out.append(RtlPort(direction, 1, n))
    return out


def _local_name(name: str, ip: IpBlock) -> str:
    m = re.match(r"(slave|master)_(.+)$", name)
    if m:
        for ref in sorted({ip.label, ip.name, ip.operation, sanitize(ip.label), sanitize(ip.name)},
                          key=len, reverse=True):
            prefix = f"{ip.role.value}_{sanitize(ref)}_"
            if name.startswith(prefix):
                return name[len(prefix):]
    return name


def build_ip_wrapper(ip: IpBlock, policies: Sequence[SecurityPolicy],
                     inner_ports: Sequence[RtlPort] | None = None) -> RtlArtifact:
    for p in policies:
        if p.placement is not None and (p.placement.level is not Level.IP or p.placement.ip != ip.name):
            raise CodegenError(f"{p.source_cwe}: policy is not placed on {ip.name}")
    ordered = _policy_order(policies)
    if inner_ports is None:
        inner_ports = default_inner_ports(ip, ordered)
    inner_ports = [RtlPort(p.direction, p.width, vid(_plain(p.name)), p.reg) for p in inner_ports]
    b = _Builder(rename=lambda n: _local_name(n, ip))
    lowered = [b.lower(p, i) for i, p in enumerate(ordered)]
    port_names = {p.name for p in inner_ports}
    for low in lowered:
        missing = [n for n in low.names if n not in port_names]
        if low.clock and low.clock[1] not in port_names:
            missing.append(low.clock[1])
        if low.reset and low.reset[1] not in port_names:
            missing.append(low.reset[1])
        if missing:
            raise UnknownPortError(f"{low.policy.source_cwe or low.tag} references "
                                   f"{', '.join(dict.fromkeys(missing))}, not a port of {ip.label}")
    directions = {p.name: p.direction for p in inner_ports}
    targets = list(dict.fromkeys(t for low in lowered for t, _ in low.assigns))
    ports = [RtlPort(p.direction, max(p.width, b.widths.get(p.name, 1)), p.name) for p in inner_ports]
    width = {p.name: p.width for p in ports}

    items: list[str] = []
    defaults = []
    conn: dict[str, str] = {p.name: p.name for p in ports}
    for t in targets:
        if directions[t] == "input":
            items.append(f"{IND}reg {_vrange(width[t])}{_suffixed(t, '_sec')};")
            defaults.append((_suffixed(t, "_sec"), t))
            conn[t] = _suffixed(t, "_sec")
        else:
            items.append(f"{IND}wire {_vrange(width[t])}{_suffixed(t, '_raw')};")
            conn[t] = _suffixed(t, "_raw")
    for low in lowered:
        for name, w in low.regs:
            items.append(f"{IND}reg {_vrange(w)}{name};")
    for low in lowered:
        low.assigns = [(_suffixed(t, "_sec") if directions[t] == "input" else t, v) for t, v in low.assigns]
        items += _seq_block(low)
    out_targets = [t for t in targets if directions[t] == "output"]
    # wrapper outputs that a policy overrides must be regs driven by the block
    ports = [RtlPort(p.direction, p.width, p.name, reg=p.name in out_targets) for p in ports]
    defaults += [(t, _suffixed(t, "_raw")) for t in out_targets]
    items += _comb_block(lowered, defaults)
    inner = sanitize(ip.label)
    conns = ",\n".join(f"{IND * 2}.{p.name}({conn[p.name]})" for p in ports)
    if conns:
        items.append(f"{IND}{inner} u_{inner.lower()} (\n{conns}\n{IND});")
    else:
        items.append(f"{IND}{inner} u_{inner.lower()} ();")
    name = f"{inner}_wrapper"
    text = _module(name, ports, items, _header(f"IP-level security wrapper for {ip.label}", lowered))
    smap = [(p.name, f"{ip.role.value}['{ip.label}'].{_plain(p.name)}", p.direction) for p in ports]
    return RtlArtifact("ip_wrapper", name, ports, text,
                       [low.policy.source_cwe or low.tag for low in lowered], ip.name, b.warnings, smap)


def write_rtl(artifacts: Sequence[RtlArtifact], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    rows = ["flat_name\treference\tmodule\tdirection"]
    for art in artifacts:
        path = out / art.file_name
        path.write_text(art.body, encoding="utf-8")
        written.append(path)
        rows += [f"{flat}\t{ref}\t{art.module_name}\t{d}" for flat, ref, d in art.signal_map]
    smap = out / "signal_map.tsv"
    smap.write_text("\n".join(rows) + "\n", encoding="utf-8")
    written.append(smap)
    return written
