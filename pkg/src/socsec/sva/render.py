"""Deterministic text for assertion units (property block, then labeled assert)."""
from __future__ import annotations

from .ast import AssertionUnit, BooleanProp, ClockSpec, PropertyExpr, SeqTerm

INDENT = "    "


def render_clock(clock: ClockSpec) -> str:
    if clock.block:
        return f"@({clock.block})"
    if clock.edge:
        return f"@({clock.edge.value} {clock.signal})"
    return f"@({clock.signal})"


def render_sequence(terms: tuple[SeqTerm, ...]) -> str:
    parts = []
    for t in terms:
        parts.append(t.expr if t.delay is None else f"##{t.delay} {t.expr}")
    return " ".join(parts)


def render_property_expr(body: PropertyExpr) -> str:
    if isinstance(body, BooleanProp):
        return body.expr
    return f"{render_sequence(body.antecedent)} {body.operator.value} {render_sequence(body.consequent)}"


def render_property_line(unit: AssertionUnit) -> str:
    head = []
    if unit.clocking is not None:
        head.append(render_clock(unit.clocking))
    if unit.disable_expr is not None:
        head.append(f"disable iff ({unit.disable_expr})")
    head.append(render_property_expr(unit.property_body))
    return " ".join(head) + ";"


def render_assertion(unit: AssertionUnit) -> str:
    ind = INDENT if unit.module_name else ""
    lines: list[str] = []
    if unit.module_name:
        if unit.ports:
            lines.append(f"module {unit.module_name} (")
            decls = []
            for p in unit.ports:
                decls.append(INDENT + " ".join(x for x in (p.direction, p.net, p.width, p.name) if x))
            lines.append(",\n".join(decls))
            lines.append(");")
        else:
            lines.append(f"module {unit.module_name};")
    lines.extend(ind + item for item in unit.preamble)
    lines.append(f"{ind}property {unit.property_name};")
    lines.append(f"{ind}{INDENT}{render_property_line(unit)}")
    lines.append(f"{ind}endproperty")
    head = f"{ind}{unit.assert_label}: assert property ({unit.target})"
    if unit.severity is None:
        lines.append(head + ";")
    else:
        msg = f'("{unit.message}")' if unit.message is not None else ""
        lines.append(head)
        lines.append(f"{ind}{INDENT}else ${unit.severity.value}{msg};")
    if unit.module_name:
        lines.append("endmodule")
    return "\n".join(lines) + "\n"
