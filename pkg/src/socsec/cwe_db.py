"""The extensive hardware-CWE database: load, query, append, persist.

File format is UTF-8 TSV with a fixed header. Lines starting with ``#`` before
the header are comments. MISC is ``key=v1|v2;key2=v3``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

HEADER = ("CWE_ID", "DESC", "BUS", "IP", "SYNC", "TYPE", "MISC", "PROVENANCE")
SEED_NAME = "cwe_extensive_db.tsv"

LLM_CONFIRMED = "llm_confirmed"

_CWE_RE = re.compile(r"^\s*cwe[-_ ]?(\d+)\s*$", re.IGNORECASE)


class DbError(ValueError):
    pass


class DbFormatError(DbError):
    def __init__(self, msg: str, row: int | None = None):
        super().__init__(f"row {row}: {msg}" if row is not None else msg)
        self.row = row


class DuplicateIdError(DbError):
    def __init__(self, cwe_id: str, row: int | None = None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"duplicate CWE id {cwe_id}{where}")
        self.cwe_id = cwe_id
        self.row = row


class DbEnumError(DbFormatError):
    pass


class EntryInvariantError(DbError):
    pass


class YesNo(str, Enum):
    YES = "yes"
    NO = "no"


class Sync(str, Enum):
    SYNCHRONOUS = "synchronous"
    ASYNCHRONOUS = "asynchronous"
    NOT_APPLICABLE = "not_applicable"


class ViolationType(str, Enum):
    ACCESS_CONTROL = "access_control"
    INFORMATION_FLOW = "information_flow"
    LIVENESS = "liveness"
    TOCTOU = "toctou"
    INADEQUATE_ERROR_HANDLING = "inadequate_error_handling"
    NOT_APPLICABLE = "not_applicable"


def canonical_id(text: str) -> str:
    """Return ``CWE-<digits>`` for any casing/spacing variant; raises on junk."""
    m = _CWE_RE.match(text)
    if not m:
        raise DbError(f"not a CWE id: {text!r}")
    return f"CWE-{int(m.group(1))}"


def id_number(cwe_id: str) -> int:
    return int(canonical_id(cwe_id).split("-")[1])


@dataclass(frozen=True)
class CweEntry:
    cwe_id: str
    description: str
    bus: YesNo
    ip: YesNo
    sync: Sync
    violation_type: ViolationType
    misc: dict = field(default_factory=dict)
    provenance: str = "seed"

    def __post_init__(self) -> None:
        object.__setattr__(self, "cwe_id", canonical_id(self.cwe_id))
        for name, enum in (("bus", YesNo), ("ip", YesNo), ("sync", Sync), ("violation_type", ViolationType)):
            object.__setattr__(self, name, enum(getattr(self, name)))
        if self.bus is YesNo.NO and self.ip is YesNo.NO and self.sync is not Sync.NOT_APPLICABLE:
            raise EntryInvariantError(
                f"{self.cwe_id}: N/A classification requires N/A timing, got {self.sync.value}")
        if "\t" in self.description or "\n" in self.description:
            raise EntryInvariantError(f"{self.cwe_id}: description contains tab/newline")

    @property
    def is_bus(self) -> bool:
        return self.bus is YesNo.YES

    @property
    def is_ip(self) -> bool:
        return self.ip is YesNo.YES

    @property
    def ip_names(self) -> list[str]:
        return list(self.misc.get("ip_name", []))

    @property
    def ip_types(self) -> list[str]:
        return list(self.misc.get("ip_type", []))


class Db:
    """Ordered, id-unique collection of :class:`CweEntry`. Treat as immutable."""

    def __init__(self, entries: Iterable[CweEntry] = ()):
        self._entries: tuple[CweEntry, ...] = ()
        self._index: dict[str, CweEntry] = {}
        for e in entries:
            if e.cwe_id in self._index:
                raise DuplicateIdError(e.cwe_id)
            self._index[e.cwe_id] = e
        self._entries = tuple(self._index.values())

    def __iter__(self) -> Iterator[CweEntry]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, cwe_id: object) -> bool:
        return isinstance(cwe_id, str) and lookup(self, cwe_id) is not None

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Db) and self._entries == other._entries

    def __repr__(self) -> str:
        return f"Db({len(self)} entries)"

    @property
    def entries(self) -> tuple[CweEntry, ...]:
        return self._entries


def lookup(db: Db, cwe_id: str) -> CweEntry | None:
    try:
        key = canonical_id(cwe_id)
    except DbError:
        return None
    return db._index.get(key)


def append_entry(db: Db, entry: CweEntry, provenance: str | None = None) -> Db:
    if lookup(db, entry.cwe_id) is not None:
        raise DuplicateIdError(entry.cwe_id)
    if provenance is not None:
        entry = replace(entry, provenance=provenance)
    return Db((*db.entries, entry))


# -- TSV codec -------------------------------------------------------------------

def format_misc(misc: dict) -> str:
    parts = []
    for key in sorted(misc):
        values = misc[key]
        if isinstance(values, str):
            values = [values]
        parts.append(f"{key}={'|'.join(values)}")
    return ";".join(parts)


def parse_misc(text: str, row: int | None = None) -> dict[str, list[str]]:
    misc: dict[str, list[str]] = {}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        if "=" not in part:
            raise DbFormatError(f"MISC item {part!r} lacks '='", row)
        key, _, vals = part.partition("=")
        misc[key.strip()] = [v.strip() for v in vals.split("|") if v.strip()]
    return misc


def _row_to_entry(cols: list[str], row: int) -> CweEntry:
    if len(cols) != len(HEADER):
        raise DbFormatError(f"expected {len(HEADER)} columns, got {len(cols)}", row)
    cid, desc, bus, ip, sync, vtype, misc, prov = cols
    try:
        bus_v, ip_v = YesNo(bus.strip().lower()), YesNo(ip.strip().lower())
        sync_v = Sync(sync.strip().lower())
        type_v = ViolationType(vtype.strip().lower())
    except ValueError as exc:
        raise DbEnumError(f"unknown classification token: {exc}", row) from None
    try:
        return CweEntry(cid, desc, bus_v, ip_v, sync_v, type_v, parse_misc(misc, row), prov or "seed")
    except DbError as exc:
        raise DbFormatError(str(exc), row) from None


def parse_db(text: str) -> Db:
    entries: dict[str, CweEntry] = {}
    header_seen = False
    for row, line in enumerate(text.splitlines(), start=1):
        if not header_seen:
            if not line.strip() or line.startswith("#"):
                continue
            if tuple(c.strip() for c in line.split("\t")) != HEADER:
                raise DbFormatError(f"bad header {line!r}", row)
            header_seen = True
            continue
        if not line.strip():
            continue
        entry = _row_to_entry(line.split("\t"), row)
        if entry.cwe_id in entries:
            raise DuplicateIdError(entry.cwe_id, row)
        entries[entry.cwe_id] = entry
    if not header_seen:
        raise DbFormatError("missing header line")
    return Db(entries.values())


def load_db(path: str | Path | None = None) -> Db:
    """Load a DB file; ``None`` loads the shipped seed."""
    if path is None:
        return parse_db(resources.files("socsec.data").joinpath(SEED_NAME).read_text(encoding="utf-8"))
    return parse_db(Path(path).read_text(encoding="utf-8"))


def dump_db(db: Db) -> str:
    lines = ["\t".join(HEADER)]
    for e in db:
        lines.append("\t".join([e.cwe_id, e.description, e.bus.value, e.ip.value, e.sync.value,
                                e.violation_type.value, format_misc(e.misc), e.provenance]))
    return "\n".join(lines) + "\n"


def save_db(db: Db, path: str | Path) -> None:
    Path(path).write_text(dump_db(db), encoding="utf-8")
