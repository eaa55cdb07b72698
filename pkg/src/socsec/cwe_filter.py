"""Reduce an LLM's CWE list to the weaknesses that apply to one SoC.

Each candidate is resolved against the extensive DB by exact id, then by
description similarity, then (optionally) by asking the LLM. Resolved DB
entries are placed at bus level, IP level or both.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

from .cwe_db import LLM_CONFIRMED, CweEntry, Db, Sync, ViolationType, YesNo, append_entry, lookup
from .llm_client import CweCandidate, LlmError, Provider, Relevance, parse_relevance
from .query_gen import relevance_query
from .similarity import Scorer, rank, tfidf_scores
from .spec_model import IpBlock, SocSpec

log = logging.getLogger(__name__)


class Level(str, Enum):
    BUS = "bus"
    IP = "ip"


class MatchRoute(str, Enum):
    EXACT_ID = "exact_id"
    SIMILARITY = "similarity"
    LLM_CONFIRMED = "llm_confirmed"


@dataclass(frozen=True)
class FilteredCwe:
    entry: CweEntry
    levels: frozenset[Level]
    matched_ips: tuple[str, ...] = ()
    match_route: MatchRoute = MatchRoute.EXACT_ID
    similarity_score: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", frozenset(Level(lv) for lv in self.levels))
        if not self.levels:
            raise ValueError(f"{self.entry.cwe_id}: levels must be non-empty")
        if self.match_route is not MatchRoute.LLM_CONFIRMED:
            if Level.BUS in self.levels and not self.entry.is_bus:
                raise ValueError(f"{self.entry.cwe_id}: bus level on a non-bus entry")
            if Level.IP in self.levels and not self.entry.is_ip:
                raise ValueError(f"{self.entry.cwe_id}: ip level on a non-ip entry")
        if self.match_route is MatchRoute.SIMILARITY and self.similarity_score is None:
            raise ValueError("similarity route needs a score")

    @property
    def cwe_id(self) -> str:
        return self.entry.cwe_id

    def to_dict(self) -> dict:
        e = self.entry
        return {
            "cwe_id": e.cwe_id,
            "description": e.description,
            "levels": sorted(lv.value for lv in self.levels),
            "matched_ips": list(self.matched_ips),
            "match_route": self.match_route.value,
            "similarity_score": self.similarity_score,
            "sync": e.sync.value,
            "violation_type": e.violation_type.value,
        }


@dataclass(frozen=True)
class FilterConfig:
    similarity_threshold: float = 0.75
    llm_fallback_enabled: bool = False
    indeterminate_policy: str = "drop"  # or "keep"
    ip_match_fallback: str = "none"     # or "all": ip=yes entries without hints match every IP

    def __post_init__(self) -> None:
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must be within [0, 1]")
        if self.indeterminate_policy not in ("drop", "keep"):
            raise ValueError("indeterminate_policy is 'drop' or 'keep'")
        if self.ip_match_fallback not in ("none", "all"):
            raise ValueError("ip_match_fallback is 'none' or 'all'")


@dataclass
class FilterResult:
    filtered: list[FilteredCwe]
    db: Db
    diagnostics: list[dict] = field(default_factory=list)

    def __iter__(self) -> Iterator:
        # allows ``filtered, db = filter_cwes(...)``
        return iter((self.filtered, self.db))

    @property
    def ids(self) -> list[str]:
        return [f.cwe_id for f in self.filtered]


def matching_ips(entry: CweEntry, ips: Sequence[IpBlock], ip_match_fallback: str = "none") -> list[str]:
    """Names of the IPs an ip-level entry applies to, per its MISC hints."""
    names = {n.strip().lower() for n in entry.ip_names if n.strip()}
    types = {t.strip().lower() for t in entry.ip_types if t.strip()}
    if not names and not types:
        return [ip.name for ip in ips] if ip_match_fallback == "all" else []
    out = []
    for ip in ips:
        by_name = bool(names & {ip.name.lower(), ip.label.lower()})
        by_type = ip.operation.lower() in types
        if by_name or by_type:
            out.append(ip.name)
    return out


def map_cwe(candidate: CweCandidate, entry: CweEntry, ips: Sequence[IpBlock],
            acc: list[FilteredCwe], route: MatchRoute = MatchRoute.EXACT_ID,
            score: float | None = None, ip_match_fallback: str = "none") -> list[FilteredCwe]:
    """Place ``entry`` at bus and/or IP level and add or merge it into ``acc``."""
    levels: set[Level] = set()
    matched: list[str] = []
    if entry.is_bus:
        levels.add(Level.BUS)
    if entry.is_ip:
        matched = matching_ips(entry, ips, ip_match_fallback)
        if matched:
            levels.add(Level.IP)
    if not levels:
        return acc
    out = list(acc)
    for i, existing in enumerate(out):
        if existing.cwe_id == entry.cwe_id:
            merged_ips = tuple(dict.fromkeys([*existing.matched_ips, *matched]))
            out[i] = FilteredCwe(existing.entry, existing.levels | levels, merged_ips,
                                 existing.match_route, existing.similarity_score)
            return out
    out.append(FilteredCwe(entry, frozenset(levels), tuple(matched), route, score))
    return out


def _confirmed_entry(candidate: CweCandidate) -> CweEntry:
    # the LLM only vouches for relevance; placement defaults to the shared bus
    return CweEntry(candidate.id, " ".join(candidate.description.split()), YesNo.YES, YesNo.NO,
                    Sync.NOT_APPLICABLE, ViolationType.NOT_APPLICABLE, {}, LLM_CONFIRMED)


def filter_cwes(candidates: Sequence[CweCandidate], db: Db, spec: SocSpec,
                llm: Provider | None = None, config: FilterConfig = FilterConfig(),
                scorer: Scorer = tfidf_scores) -> FilterResult:
    if len(db) == 0:
        raise ValueError("filter_cwes needs a non-empty db")
    acc: list[FilteredCwe] = []
    diags: list[dict] = []
    ordered = sorted(candidates, key=lambda c: c.source_rank)
    for cand in ordered:
        rec: dict = {"candidate": cand.id, "description": cand.description,
                     "source_rank": cand.source_rank, "route": None, "matched_id": None,
                     "score": None, "outcome": "dropped", "reason": None}
        diags.append(rec)
        before = {f.cwe_id: f.levels for f in acc}

        entry = lookup(db, cand.id)
        if entry is not None:
            rec.update(route=MatchRoute.EXACT_ID.value, matched_id=entry.cwe_id)
            acc = map_cwe(cand, entry, spec.ips, acc, MatchRoute.EXACT_ID,
                          ip_match_fallback=config.ip_match_fallback)
        else:
            best, score = rank(cand.description, db, scorer)[0] if cand.description.strip() else (None, 0.0)
            rec["score"] = round(score, 6)
            if best is not None and score > config.similarity_threshold:
                rec.update(route=MatchRoute.SIMILARITY.value, matched_id=best.cwe_id)
                if best.cwe_id != cand.id:
                    log.info("%s mapped to %s by description (score %.4f)", cand.id, best.cwe_id, score)
                    rec["id_rewritten"] = True
                acc = map_cwe(cand, best, spec.ips, acc, MatchRoute.SIMILARITY, score,
                              ip_match_fallback=config.ip_match_fallback)
            elif not (config.llm_fallback_enabled and llm is not None):
                rec["reason"] = "unknown id, no description match and LLM fallback disabled"
                continue
            elif cand.id in before:
                rec.update(outcome="duplicate", reason="already in filtered list")
                continue
            else:
                rec["route"] = MatchRoute.LLM_CONFIRMED.value
                try:
                    verdict = parse_relevance(llm.send(relevance_query(cand, spec)))
                except LlmError as exc:
                    rec["reason"] = f"relevance query failed: {exc}"
                    continue
                rec["verdict"] = verdict.value
                keep = verdict is Relevance.RELEVANT or (
                    verdict is Relevance.INDETERMINATE and config.indeterminate_policy == "keep")
                if not keep:
                    rec["reason"] = f"LLM verdict {verdict.value}"
                    continue
                new = _confirmed_entry(cand)
                db = append_entry(db, new)
                acc = [*acc, FilteredCwe(new, frozenset({Level.BUS}), (), MatchRoute.LLM_CONFIRMED)]
                rec.update(outcome="added", matched_id=new.cwe_id)
                continue

        matched_id = rec["matched_id"]
        after = {f.cwe_id: f.levels for f in acc}
        if matched_id not in after:
            rec["reason"] = "no bus level and no matching IP"
        elif matched_id not in before:
            rec["outcome"] = "added"
        elif after[matched_id] != before[matched_id]:
            rec["outcome"] = "merged"
        else:
            rec.update(outcome="duplicate", reason="already in filtered list")
    return FilterResult(acc, db, diags)


def relevance_metric(filtered_count: int, total_count: int) -> float:
    """Share of proposed CWEs that survive filtering; 0 when nothing was proposed."""
    if total_count < 0 or filtered_count < 0:
        raise ValueError("counts must be non-negative")
    if filtered_count > total_count:
        raise ValueError(f"filtered count {filtered_count} exceeds total {total_count}")
    if total_count == 0:
        return 0.0
    return filtered_count / total_count


def write_diagnostics(path: str | Path, diagnostics: Sequence[dict]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as fh:
        for rec in diagnostics:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
