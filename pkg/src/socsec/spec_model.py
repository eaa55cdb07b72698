"""SoC design specification model, JSON ingestion and the survey path.

The document format is the JSON layout used by the MIT-CEP example: a ``SoC``
section, a ``BUS_INTERFACE`` section and one ``MASTER_n`` / ``SLAVE_n`` section
per IP block. Every scalar is a string. Keys we do not understand are kept in
``misc`` maps and written back out by :func:`serialize_spec`.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Any, Iterable, Mapping

ADDRESS_MAX = 0xFFFFFFFF

_SECTION_RE = re.compile(r"^(MASTER|SLAVE)_(\d+)$")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_$]*$")

SOC_KEYS = ("NAME", "TYPE", "USAGE", "BUS", "NO_OF_MASTERS", "NO_OF_SLAVES")
BUS_KEYS = ("INTERFACE_NAME", "NO_OF_PORTS", "SIGNAL_NAMES")
IP_REQUIRED = ("NAME", "TYPE", "OPERATION", "ADDRESS_RANGE", "BASE_ADDRESS")
IP_OPTIONAL = ("ABBREVIATION", "PROTECTED_ADDRESS_RANGE")


class SpecError(ValueError):
    """Base class for specification errors."""


class SpecSyntaxError(SpecError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"{msg} (line {line}, column {column})")
        self.line = line
        self.column = column


class SpecSchemaError(SpecError):
    def __init__(self, msg: str, key: str | None = None):
        super().__init__(msg)
        self.key = key


class SpecRangeError(SpecError):
    def __init__(self, msg: str, ip_name: str):
        super().__init__(msg)
        self.ip_name = ip_name


class Role(str, Enum):
    MASTER = "master"
    SLAVE = "slave"


@dataclass(frozen=True)
class AddressRange:
    low: int
    high: int

    def __post_init__(self) -> None:
        if not (0 <= self.low <= ADDRESS_MAX and 0 <= self.high <= ADDRESS_MAX):
            raise ValueError("address outside 32-bit space")
        if self.low > self.high:
            raise ValueError(f"low 0x{self.low:08X} above high 0x{self.high:08X}")

    def __contains__(self, item: object) -> bool:
        if isinstance(item, AddressRange):
            return self.low <= item.low and item.high <= self.high
        if isinstance(item, int):
            return self.low <= item <= self.high
        return False

    def format(self, sep: str = "-") -> str:
        return f"{self.low:08X}{sep}{self.high:08X}"


@dataclass(frozen=True)
class BusInterface:
    interface_name: str
    num_ports: int
    signal_names: tuple[str, ...] = ()
    misc: dict = field(default_factory=dict, compare=True)

    def __post_init__(self) -> None:
        if self.num_ports > 0 and not self.signal_names:
            raise SpecSchemaError("SIGNAL_NAMES must be non-empty when NO_OF_PORTS > 0", "SIGNAL_NAMES")


@dataclass(frozen=True)
class IpBlock:
    role: Role
    name: str
    description: str
    operation: str
    base_address: int
    address_range: AddressRange
    abbreviation: str | None = None
    protected_range: AddressRange | None = None
    misc: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.base_address not in self.address_range:
            raise SpecRangeError(
                f"{self.label}: base address 0x{self.base_address:08X} outside "
                f"{self.address_range.format()}", self.label)
        if self.protected_range is not None and self.protected_range not in self.address_range:
            raise SpecRangeError(
                f"{self.label}: protected range {self.protected_range.format(':')} not inside "
                f"{self.address_range.format()}", self.label)

    @property
    def label(self) -> str:
        """Short name used in generated identifiers and reports."""
        return self.abbreviation or self.name

    @property
    def aliases(self) -> set[str]:
        names = {self.name.lower(), self.label.lower()}
        return names

    @property
    def signals(self) -> tuple[str, ...]:
        """Optional per-IP signal list carried in the ``SIGNALS`` extension key."""
        raw = self.misc.get("SIGNALS")
        if not isinstance(raw, str):
            return ()
        return tuple(s for s in (p.strip() for p in raw.split(",")) if s and s != "...")


@dataclass(frozen=True)
class SocSpec:
    name: str
    type: str
    usage: str
    bus_protocol: str
    num_masters: int
    num_slaves: int
    bus_interface: BusInterface
    ips: tuple[IpBlock, ...] = ()
    misc: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        masters = sum(1 for ip in self.ips if ip.role is Role.MASTER)
        slaves = len(self.ips) - masters
        if masters != self.num_masters:
            raise SpecSchemaError(
                f"NO_OF_MASTERS is {self.num_masters} but {masters} master section(s) given",
                "NO_OF_MASTERS")
        if slaves != self.num_slaves:
            raise SpecSchemaError(
                f"NO_OF_SLAVES is {self.num_slaves} but {slaves} slave section(s) given",
                "NO_OF_SLAVES")
        seen: set[str] = set()
        for ip in self.ips:
            if ip.name in seen:
                raise SpecSchemaError(f"duplicate IP name {ip.name!r}", "NAME")
            seen.add(ip.name)

    def find_ip(self, ref: str) -> IpBlock | None:
        """Resolve an IP by name, abbreviation or operation (case-insensitive).

        Name and abbreviation win over operation; an operation shared by several
        IPs resolves to the first one declared.
        """
        key = ref.strip().lower()
        for ip in self.ips:
            if key in ip.aliases:
                return ip
        for ip in self.ips:
            if ip.operation.lower() == key:
                return ip
        return None

    def ip_named(self, name: str) -> IpBlock:
        for ip in self.ips:
            if ip.name == name:
                return ip
        raise KeyError(name)


# -- parsing -----------------------------------------------------------------

def parse_address(text: str, key: str = "BASE_ADDRESS") -> int:
    s = text.strip()
    if s.lower().startswith("0x"):
        s = s[2:]
    s = s.replace("_", "")
    if not s or not re.fullmatch(r"[0-9A-Fa-f]+", s):
        raise SpecSchemaError(f"{key}: {text!r} is not a hex address", key)
    value = int(s, 16)
    if value > ADDRESS_MAX:
        raise SpecSchemaError(f"{key}: {text!r} is wider than 32 bits", key)
    return value


def parse_range(text: str, key: str = "ADDRESS_RANGE", ip_name: str = "") -> AddressRange:
    parts = re.split(r"\s*[-:]\s*", text.strip())
    if len(parts) != 2:
        raise SpecSchemaError(f"{key}: {text!r} is not LOW-HIGH or LOW:HIGH", key)
    low, high = parse_address(parts[0], key), parse_address(parts[1], key)
    if low > high:
        raise SpecRangeError(f"{ip_name or key}: range {text!r} has low above high", ip_name or key)
    return AddressRange(low, high)


def parse_count(text: str, key: str) -> int:
    s = text.strip()
    if not s.isdigit():
        raise SpecSchemaError(f"{key}: {text!r} is not a count", key)
    return int(s)


def _str_field(section: Mapping[str, Any], key: str, where: str, required: bool = True) -> str | None:
    if key not in section:
        if required:
            raise SpecSchemaError(f"{where}: missing required key {key!r}", key)
        return None
    value = section[key]
    if not isinstance(value, str):
        raise SpecSchemaError(f"{where}.{key}: expected a string, got {type(value).__name__}", key)
    return value


def _section(doc: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    if key not in doc:
        raise SpecSchemaError(f"missing required key {key!r}", key)
    sec = doc[key]
    if not isinstance(sec, dict):
        raise SpecSchemaError(f"{key}: expected an object", key)
    return sec


def _parse_signal_names(text: str) -> tuple[str, ...]:
    names = []
    for part in text.split(","):
        part = part.strip()
        # hand-written documents often elide the tail with "..."
        if not part or part == "...":
            continue
        if not _IDENT_RE.match(part):
            raise SpecSchemaError(f"SIGNAL_NAMES: {part!r} is not an identifier", "SIGNAL_NAMES")
        names.append(part)
    return tuple(names)


def _parse_ip(role: Role, key: str, sec: Mapping[str, Any]) -> IpBlock:
    if not isinstance(sec, dict):
        raise SpecSchemaError(f"{key}: expected an object", key)
    name = _str_field(sec, "NAME", key)
    label = _str_field(sec, "ABBREVIATION", key, required=False) or name
    vals = {k: _str_field(sec, k, key) for k in IP_REQUIRED}
    prot_text = _str_field(sec, "PROTECTED_ADDRESS_RANGE", key, required=False)
    try:
        rng = parse_range(vals["ADDRESS_RANGE"], "ADDRESS_RANGE", label)
        prot = parse_range(prot_text, "PROTECTED_ADDRESS_RANGE", label) if prot_text is not None else None
    except ValueError as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecRangeError(f"{label}: {exc}", label) from exc
    misc = {k: v for k, v in sec.items() if k not in IP_REQUIRED + IP_OPTIONAL}
    return IpBlock(
        role=role,
        name=name,
        abbreviation=_str_field(sec, "ABBREVIATION", key, required=False),
        description=vals["TYPE"],
        operation=vals["OPERATION"],
        base_address=parse_address(vals["BASE_ADDRESS"], "BASE_ADDRESS"),
        address_range=rng,
        protected_range=prot,
        misc=misc,
    )


def spec_from_dict(doc: Mapping[str, Any]) -> SocSpec:
    if not isinstance(doc, dict):
        raise SpecSchemaError("top level must be an object")
    soc = _section(doc, "SoC")
    bus = _section(doc, "BUS_INTERFACE")
    soc_vals = {k: _str_field(soc, k, "SoC") for k in SOC_KEYS}
    bus_vals = {k: _str_field(bus, k, "BUS_INTERFACE") for k in BUS_KEYS}

    sections: dict[Role, list[tuple[int, str]]] = {Role.MASTER: [], Role.SLAVE: []}
    ips: list[IpBlock] = []
    misc: dict[str, Any] = {}
    soc_extra = {k: v for k, v in soc.items() if k not in SOC_KEYS}
    if soc_extra:
        misc["SoC"] = soc_extra
    for key, value in doc.items():
        if key in ("SoC", "BUS_INTERFACE"):
            continue
        m = _SECTION_RE.match(key)
        if not m:
            misc[key] = value
            continue
        role = Role.MASTER if m.group(1) == "MASTER" else Role.SLAVE
        n = int(m.group(2))
        if n < 1:
            raise SpecSchemaError(f"{key}: section numbers start at 1", key)
        sections[role].append((n, key))
        ips.append(_parse_ip(role, key, value))
    for role, found in sections.items():
        nums = sorted(n for n, _ in found)
        if nums != list(range(1, len(nums) + 1)):
            prefix = role.value.upper()
            raise SpecSchemaError(f"{prefix}_n sections must be numbered 1..{len(nums)} without gaps, got {nums}",
                                  prefix)

    interface = BusInterface(
        interface_name=bus_vals["INTERFACE_NAME"],
        num_ports=parse_count(bus_vals["NO_OF_PORTS"], "NO_OF_PORTS"),
        signal_names=_parse_signal_names(bus_vals["SIGNAL_NAMES"]),
        misc={k: v for k, v in bus.items() if k not in BUS_KEYS},
    )
    return SocSpec(
        name=soc_vals["NAME"],
        type=soc_vals["TYPE"],
        usage=soc_vals["USAGE"],
        bus_protocol=soc_vals["BUS"],
        num_masters=parse_count(soc_vals["NO_OF_MASTERS"], "NO_OF_MASTERS"),
        num_slaves=parse_count(soc_vals["NO_OF_SLAVES"], "NO_OF_SLAVES"),
        bus_interface=interface,
        ips=tuple(ips),
        misc=misc,
    )


def parse_spec(text: str) -> SocSpec:
    """Parse and validate a JSON spec document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return spec_from_dict(doc)


def load_spec(path) -> SocSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


# -- serialization -------------------------------------------------------------

def spec_to_dict(spec: SocSpec) -> dict[str, Any]:
    misc = dict(spec.misc)
    soc_extra = misc.pop("SoC", {}) or {}
    doc: dict[str, Any] = {
        "SoC": {
            "NAME": spec.name,
            "TYPE": spec.type,
            "USAGE": spec.usage,
            "BUS": spec.bus_protocol,
            "NO_OF_MASTERS": str(spec.num_masters),
            "NO_OF_SLAVES": str(spec.num_slaves),
            **soc_extra,
        },
        "BUS_INTERFACE": {
            "INTERFACE_NAME": spec.bus_interface.interface_name,
            "NO_OF_PORTS": str(spec.bus_interface.num_ports),
            "SIGNAL_NAMES": ",".join(spec.bus_interface.signal_names),
            **spec.bus_interface.misc,
        },
    }
    counters = {Role.MASTER: 0, Role.SLAVE: 0}
    for ip in spec.ips:
        counters[ip.role] += 1
        sec: dict[str, Any] = {"NAME": ip.name}
        if ip.abbreviation is not None:
            sec["ABBREVIATION"] = ip.abbreviation
        sec["TYPE"] = ip.description
        sec["OPERATION"] = ip.operation
        sec["ADDRESS_RANGE"] = ip.address_range.format("-")
        sec["BASE_ADDRESS"] = f"{ip.base_address:08X}"
        if ip.protected_range is not None:
            sec["PROTECTED_ADDRESS_RANGE"] = ip.protected_range.format(":")
        sec.update(ip.misc)
        doc[f"{ip.role.value.upper()}_{counters[ip.role]}"] = sec
    doc.update(misc)
    return doc


def serialize_spec(spec: SocSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=4) + "\n"


# -- survey --------------------------------------------------------------------

class SurveyError(SpecError):
    def __init__(self, msg: str, question_id: str):
        super().__init__(msg)
        self.question_id = question_id


class MissingAnswerError(SurveyError):
    pass


class UnparseableAnswerError(SurveyError):
    pass


@dataclass(frozen=True)
class SurveyQuestion:
    id: str
    prompt: str
    target: str
    parser: str
    required: bool = True


@dataclass(frozen=True)
class SurveyTemplate:
    soc: tuple[SurveyQuestion, ...]
    ip: tuple[SurveyQuestion, ...]

    def ip_questions(self, role: Role, index: int) -> list[SurveyQuestion]:
        prefix = f"{role.value}_{index}"
        return [SurveyQuestion(f"{prefix}.{q.id}", q.prompt.format(role=role.value, n=index),
                               q.target, q.parser, q.required) for q in self.ip]


def load_survey_template(path=None) -> SurveyTemplate:
    if path is None:
        text = resources.files("socsec.data").joinpath("survey.json").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    raw = json.loads(text)
    mk = lambda items: tuple(SurveyQuestion(**q) for q in items)  # noqa: E731
    return SurveyTemplate(soc=mk(raw["soc"]), ip=mk(raw["ip"]))


def check_answer(question: SurveyQuestion, answer: str) -> str:
    """Validate one answer and return it normalized to document form."""
    a = answer.strip()
    try:
        if question.parser == "count":
            return str(parse_count(a, question.target))
        if question.parser == "address":
            return f"{parse_address(a, question.target):08X}"
        if question.parser == "range":
            sep = ":" if question.target == "PROTECTED_ADDRESS_RANGE" else "-"
            return parse_range(a, question.target).format(sep)
        if question.parser == "signals":
            return ",".join(_parse_signal_names(a))
        if question.parser == "text":
            return a
    except SpecError as exc:
        raise UnparseableAnswerError(f"{question.id}: {exc}", question.id) from None
    raise ValueError(f"unknown survey parser {question.parser!r}")


def survey_to_spec(answers: Iterable[tuple[str, str]] | Mapping[str, str],
                   template: SurveyTemplate | None = None) -> SocSpec:
    """Build a spec from (question-id, answer) pairs via the document format.

    Optional questions may be omitted or answered with an empty string.
    """
    template = template or load_survey_template()
    given = dict(answers.items() if isinstance(answers, Mapping) else answers)

    def ask(q: SurveyQuestion, section: dict) -> None:
        raw = given.get(q.id)
        if raw is None or raw.strip() == "":
            if q.required:
                raise MissingAnswerError(f"no answer for {q.id!r}", q.id)
            return
        section[q.target] = check_answer(q, raw)

    soc: dict[str, str] = {}
    bus: dict[str, str] = {}
    for q in template.soc:
        ask(q, bus if q.target in BUS_KEYS else soc)
    doc: dict[str, Any] = {"SoC": soc, "BUS_INTERFACE": bus}
    for role, count_key in ((Role.MASTER, "NO_OF_MASTERS"), (Role.SLAVE, "NO_OF_SLAVES")):
        for i in range(1, int(soc[count_key]) + 1):
            sec: dict[str, str] = {}
            for q in template.ip_questions(role, i):
                ask(q, sec)
            doc[f"{role.value.upper()}_{i}"] = sec
    return spec_from_dict(doc)
