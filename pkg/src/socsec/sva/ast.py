"""Assertion unit data model."""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Union

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_$]*$")


def is_identifier(name: str) -> bool:
    return bool(_IDENT.match(name))


class Severity(str, Enum):
    ERROR = "error"
    DISPLAY = "display"
    INFO = "info"
    WARNING = "warning"
    FATAL = "fatal"


class Edge(str, Enum):
    POSEDGE = "posedge"
    NEGEDGE = "negedge"


class ImplOp(str, Enum):
    OVERLAPPED = "|->"
    NON_OVERLAPPED = "|=>"


@dataclass(frozen=True)
class Port:
    direction: str
    name: str
    width: str | None = None  # e.g. "[31:0]"
    net: str | None = None    # wire / logic / reg


@dataclass(frozen=True)
class ClockSpec:
    signal: str
    edge: Edge | None = None
    block: str | None = None  # set when the property clocks on a named clocking block

    def __post_init__(self) -> None:
        if not self.signal:
            raise ValueError("clock signal must be non-empty")


@dataclass(frozen=True)
class SeqTerm:
    """One ``##``-separated element; ``delay`` is the explicit ``##N`` before it."""
    expr: str
    delay: int | None = None

    def __post_init__(self) -> None:
        if self.delay is not None and self.delay < 0:
            raise ValueError("cycle delay must be >= 0")


@dataclass(frozen=True)
class BooleanProp:
    expr: str


@dataclass(frozen=True)
class Implication:
    antecedent: tuple[SeqTerm, ...]
    consequent: tuple[SeqTerm, ...]
    operator: ImplOp = ImplOp.OVERLAPPED

    def __post_init__(self) -> None:
        if not self.antecedent or not self.consequent:
            raise ValueError("implication sides must be non-empty")
        if self.antecedent[0].delay is not None:
            raise ValueError("antecedent cannot start with a cycle delay")
        for side in (self.antecedent, self.consequent):
            if any(t.delay is None for t in side[1:]):
                raise ValueError("sequence terms after the first need a cycle delay")


PropertyExpr = Union[BooleanProp, Implication]


@dataclass(frozen=True)
class AssertionUnit:
    property_name: str
    property_body: PropertyExpr
    assert_label: str
    clocking: ClockSpec | None = None
    disable_expr: str | None = None
    assert_target: str | None = None  # text inside assert property(...); None means property_name
    severity: Severity | None = None
    message: str | None = None
    module_name: str | None = None
    ports: tuple[Port, ...] = ()
    preamble: tuple[str, ...] = ()  # opaque module items (localparams, clocking blocks, ...)

    def __post_init__(self) -> None:
        for what, name in (("property name", self.property_name), ("assert label", self.assert_label)):
            if not is_identifier(name):
                raise ValueError(f"{what} {name!r} is not an identifier")
        if self.module_name is not None and not is_identifier(self.module_name):
            raise ValueError(f"module name {self.module_name!r} is not an identifier")

    @property
    def target(self) -> str:
        return self.assert_target if self.assert_target is not None else self.property_name

    @property
    def reset(self) -> tuple[Edge, str] | None:
        """Reset derived from a single-signal ``disable iff`` guard."""
        if not self.disable_expr:
            return None
        m = re.fullmatch(r"\s*(!?)\s*\(?\s*([A-Za-z_][A-Za-z0-9_$]*)\s*\)?\s*", self.disable_expr)
        if not m:
            return None
        return (Edge.NEGEDGE if m.group(1) else Edge.POSEDGE, m.group(2))
