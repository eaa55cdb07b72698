"""Stage-by-stage flow from a SoC spec to enforcement RTL, with checkpoints.

Stages run in a fixed order: query, cwe, filter, sva, policy, rtl. Each
stage stores its result as JSON under ``<out>/checkpoints``; files in the
rest of ``out_dir`` are rebuilt from those results, so a resumed run writes
exactly what an uninterrupted run would. Every checkpoint records a digest
of the checkpoint before it, and a checkpoint whose predecessor is missing or
changed is ignored.
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .codegen import CodegenError, LoweringError, build_central_module, build_ip_wrapper, validate_rtl
from .cwe_db import Db, dump_db, load_db, lookup, parse_db
from .cwe_filter import FilterConfig, FilteredCwe, Level, MatchRoute, filter_cwes, relevance_metric
from .llm_client import (AuditLog, CweCandidate, HttpProvider, LlmError, MockProvider, NoCodeFoundError,
                         Provider, ProviderConfig, extract_code_block, parse_cwe_list)
from .policy import (Level as PlacementLevel, PolicyError, SecurityPolicy, assertion_to_policy,
                     classify_placement, dumps_policies, parse_policy, serialize_policy)
from .query_gen import QueryKind, QueryText, cwe_enumeration_query, load_assumptions, sva_generation_query
from .spec_model import IpBlock, SocSpec, SpecError, load_spec
from .sva import (NoTemplateError, SvaSyntaxError, UncorrectableError, correct_detailed,
                  instantiate_template, lint, parse_assertion, render_assertion)

log = logging.getLogger(__name__)

STAGES = ("query", "cwe", "filter", "sva", "policy", "rtl")
STAGE_ALIASES = {"q": "query", "c": "cwe", "f": "filter", "s": "sva", "p": "policy", "r": "rtl"}
CHECKPOINT_DIR = "checkpoints"
REPORT_NAME = "report.json"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"{stage}: {msg}")
        self.stage = stage


def parse_stages(text: str | Sequence[str] | None) -> tuple[str, ...]:
    """Accepts names or one-letter aliases; the result must be a prefix of the stage chain."""
    if text is None:
        return STAGES
    items = text.split(",") if isinstance(text, str) else list(text)
    names = []
    for item in items:
        item = item.strip().lower()
        if not item:
            continue
        name = STAGE_ALIASES.get(item, item)
        if name not in STAGES:
            raise ConfigError(f"unknown stage {item!r}")
        names.append(name)
    chosen = set(names)
    want = STAGES[:len(chosen)]
    if set(want) != chosen:
        missing = [s for s in want if s not in chosen]
        raise ConfigError(f"stages must form a chain from 'query'; missing {', '.join(missing)}")
    return want


@dataclass
class PipelineConfig:
    spec_path: Path
    out_dir: Path
    db_path: Path | None = None
    provider: ProviderConfig | None = None
    mock_dir: Path | None = None
    filter: FilterConfig = field(default_factory=FilterConfig)
    offline: bool = False
    stages: tuple[str, ...] = STAGES
    actions: Mapping[str, str] = field(default_factory=dict)
    only_violated: tuple[str, ...] | None = None
    sva_source: str = "llm"  # or "template"
    resume: bool = False
    assumptions_path: Path | None = None
    # asked for (key, default action) when ``actions`` has no entry; not part of the fingerprint
    action_prompt: Callable[[str, str | None], str] | None = None

    def validate(self) -> None:
        if self.sva_source not in ("llm", "template"):
            raise ConfigError("sva_source is 'llm' or 'template'")
        if not Path(self.spec_path).is_file():
            raise ConfigError(f"spec file {self.spec_path} not found")
        if self.db_path is not None and not Path(self.db_path).is_file():
            raise ConfigError(f"db file {self.db_path} not found")
        if self.offline and self.mock_dir is None:
            raise ConfigError("offline runs need a mock directory")
        if self.mock_dir is not None and not Path(self.mock_dir).is_dir():
            raise ConfigError(f"mock directory {self.mock_dir} not found")
        parse_stages(self.stages)

    def fingerprint(self) -> str:
        """Digest of everything the first stage depends on."""
        h = hashlib.sha256()
        h.update(Path(self.spec_path).read_bytes())
        if self.db_path is not None:
            h.update(Path(self.db_path).read_bytes())
        h.update(json.dumps({
            "filter": [self.filter.similarity_threshold, self.filter.llm_fallback_enabled,
                       self.filter.indeterminate_policy, self.filter.ip_match_fallback],
            "actions": dict(sorted(self.actions.items())),
            "only_violated": list(self.only_violated) if self.only_violated is not None else None,
            "sva_source": self.sva_source,
        }, sort_keys=True).encode())
        return h.hexdigest()[:16]


@dataclass
class RunReport:
    stages: dict[str, str] = field(default_factory=dict)  # stage -> ok / resumed / failed / skipped
    candidate_count: int | None = None
    filtered_count: int | None = None
    relevance_metric: float | None = None
    artifacts: dict[str, dict[str, list[str]]] = field(default_factory=dict)
    diagnostics: dict[str, int] = field(default_factory=dict)
    error: str | None = None
    exit_code: int = 0

    def to_dict(self, timestamp: str | None = None) -> dict:
        return {
            "generated_at": timestamp,
            "stages": self.stages,
            "candidate_count": self.candidate_count,
            "filtered_count": self.filtered_count,
            "relevance_metric": None if self.relevance_metric is None else round(self.relevance_metric, 4),
            "artifacts": self.artifacts,
            "diagnostics": self.diagnostics,
            "error": self.error,
        }


# -- helpers -------------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]+", "_", name).strip("_")


def unit_key(cwe_id: str, ip: IpBlock | None) -> str:
    """File stem of one assertion: ``<cwe_id>_<ip label>`` or ``<cwe_id>_bus``."""
    return f"{cwe_id}_{_safe(ip.label) if ip else 'bus'}"


_WRITE_DATA = ("wdata", "w_data", "dat_i", "data_i", "wr_data", "din")


def default_action(ip: IpBlock | None, spec: SocSpec) -> str | None:
    """Zero the write-data signal of the IP, or of the bus when no IP is given."""
    if ip is not None:
        for needle in _WRITE_DATA:
            for s in ip.signals:
                if needle in s.lower():
                    return f"{s} = 32'h0;"
    for needle in _WRITE_DATA:
        for s in spec.bus_interface.signal_names:
            if needle in s.lower():
                return f"{s} = 32'h0;"
    return None


def action_for(key: str, cwe_id: str, ip: IpBlock | None, spec: SocSpec,
               actions: Mapping[str, str]) -> str | None:
    """User answer for ``key`` (or the CWE as a whole), else the default; empty answers mean default."""
    for k in (key, cwe_id):
        text = actions.get(k)
        if text is not None and text.strip():
            return text
    return default_action(ip, spec)


# -- the stages ----------------------------------------------------------------------

@dataclass
class _Context:
    config: PipelineConfig
    spec: SocSpec
    db: Db
    provider: Provider | None
    results: dict[str, dict] = field(default_factory=dict)


def _stage_query(ctx: _Context) -> dict:
    assumptions = load_assumptions(ctx.config.assumptions_path)
    q = cwe_enumeration_query(ctx.spec, assumptions)
    return {"queries": [{"kind": q.kind.value, "digest": q.digest, "context_digest": q.context_digest,
                         "body": q.body}]}


def _need_provider(ctx: _Context, stage: str) -> Provider:
    if ctx.provider is None:
        raise StageError(stage, "no LLM provider configured (give --mock-dir or provider settings)")
    return ctx.provider


def _stage_cwe(ctx: _Context) -> dict:
    provider = _need_provider(ctx, "cwe")
    q = ctx.results["query"]["queries"][0]
    query = QueryText(QueryKind(q["kind"]), q["body"], q["context_digest"])
    response = provider.send(query)
    candidates = parse_cwe_list(response)
    return {"response": response,
            "candidates": [{"id": c.id, "description": c.description, "source_rank": c.source_rank}
                           for c in candidates]}


def _candidates(ctx: _Context) -> list[CweCandidate]:
    return [CweCandidate(**c) for c in ctx.results["cwe"]["candidates"]]


def _stage_filter(ctx: _Context) -> dict:
    cands = _candidates(ctx)
    res = filter_cwes(cands, ctx.db, ctx.spec, ctx.provider, ctx.config.filter)
    entries = Db([f.entry for f in res.filtered])
    return {
        "filtered": [f.to_dict() for f in res.filtered],
        "entries": dump_db(entries),
        "diagnostics": res.diagnostics,
        "candidate_count": len(cands),
        "filtered_count": len(res.filtered),
        "metric": relevance_metric(len(res.filtered), len(cands)),
    }


def _filtered(ctx: _Context) -> list[FilteredCwe]:
    data = ctx.results["filter"]
    db = parse_db(data["entries"]) if data["filtered"] else Db()
    out = []
    for item in data["filtered"]:
        entry = lookup(db, item["cwe_id"])
        out.append(FilteredCwe(entry, frozenset(Level(lv) for lv in item["levels"]),
                               tuple(item["matched_ips"]), MatchRoute(item["match_route"]),
                               item["similarity_score"]))
    return out


def _targets(f: FilteredCwe, spec: SocSpec) -> list[IpBlock | None]:
    out: list[IpBlock | None] = []
    if Level.BUS in f.levels:
        out.append(None)
    if Level.IP in f.levels:
        out += [spec.ip_named(n) for n in f.matched_ips]
    return out


def _stage_sva(ctx: _Context) -> dict:
    items, skipped = [], []
    for f in _filtered(ctx):
        for ip in _targets(f, ctx.spec):
            key = unit_key(f.cwe_id, ip)
            rec = {"key": key, "cwe_id": f.cwe_id, "ip": ip.name if ip else None}
            try:
                if ctx.config.sva_source == "template":
                    text = render_assertion(instantiate_template(f.entry, ip, ctx.spec))
                    source, applied, bindings = "template", [], []
                else:
                    provider = _need_provider(ctx, "sva")
                    reply = provider.send(sva_generation_query(f.entry, ctx.spec, ip))
                    fixed = correct_detailed(extract_code_block(reply), ctx.spec, ip)
                    text, source = fixed.text, "llm"
                    applied = [a.rule_id for a in fixed.applied]
                    bindings = [f"{b.kind}:{b.old}->{b.new}" for b in fixed.bindings]
            except (NoTemplateError, NoCodeFoundError, UncorrectableError) as exc:
                skipped.append({**rec, "reason": f"{type(exc).__name__}: {exc}"})
                continue
            advisories = [f"{x.rule_id}: {x.message}" for x in lint(text)]
            items.append({**rec, "source": source, "text": text if text.endswith("\n") else text + "\n",
                          "applied": applied, "bindings": bindings, "advisories": advisories})
    return {"items": items, "skipped": skipped}


def _stage_policy(ctx: _Context) -> dict:
    entries = {f.cwe_id: f.entry for f in _filtered(ctx)}
    only = None
    if ctx.config.only_violated is not None:
        only = {s.strip() for s in ctx.config.only_violated}
    policies, skipped = [], []
    for item in ctx.results["sva"]["items"]:
        if only is not None and item["key"] not in only and item["cwe_id"] not in only:
            skipped.append({"key": item["key"], "reason": "not listed as violated"})
            continue
        ip = ctx.spec.ip_named(item["ip"]) if item["ip"] else None
        action = action_for(item["key"], item["cwe_id"], ip, ctx.spec, ctx.config.actions)
        prompt = ctx.config.action_prompt
        if prompt is not None and item["key"] not in ctx.config.actions \
                and item["cwe_id"] not in ctx.config.actions:
            action = prompt(item["key"], action) or action
        if action is None:
            skipped.append({"key": item["key"], "reason": "no action given and no default signal"})
            continue
        try:
            unit = parse_assertion(item["text"])
            pol = assertion_to_policy(unit, action, ctx.spec, item["cwe_id"])
            pol = classify_placement(pol, entries.get(item["cwe_id"]), ctx.spec, ip)
        except (PolicyError, SvaSyntaxError) as exc:
            skipped.append({"key": item["key"], "reason": f"{type(exc).__name__}: {exc}"})
            continue
        policies.append({"key": item["key"], "policy": serialize_policy(pol)})
    return {"policies": policies, "skipped": skipped}


def rtl_artifacts(policies: Sequence[SecurityPolicy], spec: SocSpec):
    """Central module for bus-level policies plus one wrapper per IP with policies."""
    bus = [p for p in policies if p.placement is None or p.placement.level is PlacementLevel.BUS]
    per_ip: dict[str, list[SecurityPolicy]] = {}
    for p in policies:
        if p.placement is not None and p.placement.level is PlacementLevel.IP:
            per_ip.setdefault(p.placement.ip, []).append(p)
    arts = [build_central_module(bus, spec)]
    for ip in spec.ips:
        if ip.name in per_ip:
            arts.append(build_ip_wrapper(ip, per_ip[ip.name]))
    return arts


def _stage_rtl(ctx: _Context) -> dict:
    policies = [parse_policy(p["policy"]) for p in ctx.results["policy"]["policies"]]
    try:
        arts = rtl_artifacts(policies, ctx.spec)
    except (CodegenError, LoweringError) as exc:
        raise StageError("rtl", str(exc)) from None
    files, warnings, included = {}, [], {}
    for art in arts:
        findings = validate_rtl(art)
        if findings:
            raise StageError("rtl", f"{art.module_name} failed self-check: {findings[0]}")
        files[art.file_name] = art.body
        warnings += art.warnings
        included[art.file_name] = art.policies_included
    rows = ["flat_name\treference\tmodule\tdirection"]
    for art in arts:
        rows += [f"{a}\t{b}\t{art.module_name}\t{c}" for a, b, c in art.signal_map]
    files["signal_map.tsv"] = "\n".join(rows) + "\n"
    return {"files": files, "warnings": warnings, "included": included}


_RUNNERS: dict[str, Callable[[_Context], dict]] = {
    "query": _stage_query, "cwe": _stage_cwe, "filter": _stage_filter,
    "sva": _stage_sva, "policy": _stage_policy, "rtl": _stage_rtl,
}


# -- output files --------------------------------------------------------------------

def _write(path: Path, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return str(path)


def _materialize(stage: str, data: dict, out: Path) -> list[str]:
    """Write the human-facing files of a stage from its checkpoint data."""
    written = []
    if stage == "query":
        for q in data["queries"]:
            written.append(_write(out / "queries" / f"{q['kind']}.txt", q["body"] + "\n"))
    elif stage == "cwe":
        written.append(_write(out / "cwe" / "response.txt", data["response"]))
        written.append(_write(out / "cwe" / "candidates.json", _dump(data["candidates"])))
    elif stage == "filter":
        written.append(_write(out / "filter" / "filtered.json", _dump(data["filtered"])))
        lines = "".join(json.dumps(d, sort_keys=True) + "\n" for d in data["diagnostics"])
        written.append(_write(out / "filter" / "diagnostics.jsonl", lines))
    elif stage == "sva":
        shutil.rmtree(out / "sva", ignore_errors=True)
        for item in data["items"]:
            written.append(_write(out / "sva" / f"{item['key']}.sv", item["text"]))
        written.append(_write(out / "sva" / "summary.json", _dump(
            {"items": [{k: v for k, v in i.items() if k != "text"} for i in data["items"]],
             "skipped": data["skipped"]})))
    elif stage == "policy":
        pols = [parse_policy(p["policy"]) for p in data["policies"]]
        written.append(_write(out / "policies" / "policies.json", dumps_policies(pols)))
        if data["skipped"]:
            written.append(_write(out / "policies" / "skipped.json", _dump(data["skipped"])))
    elif stage == "rtl":
        shutil.rmtree(out / "rtl", ignore_errors=True)
        for name, text in sorted(data["files"].items()):
            written.append(_write(out / "rtl" / name, text))
    return written


# -- checkpoints ---------------------------------------------------------------------

def _checkpoint_path(out: Path, stage: str) -> Path:
    return out / CHECKPOINT_DIR / f"{stage}.json"


def _load_checkpoint(out: Path, stage: str, upstream: str) -> dict | None:
    path = _checkpoint_path(out, stage)
    if not path.is_file():
        return None
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None
    if doc.get("stage") != stage or doc.get("upstream") != upstream:
        return None
    return doc


def _save_checkpoint(out: Path, stage: str, upstream: str, data: dict) -> str:
    text = _dump({"stage": stage, "upstream": upstream, "data": data})
    _write(_checkpoint_path(out, stage), text)
    return _digest(text)


# -- orchestration -------------------------------------------------------------------

def make_provider(config: PipelineConfig, out: Path) -> Provider | None:
    audit = AuditLog(out / "llm_audit.jsonl") if not config.offline else None
    if config.mock_dir is not None:
        return MockProvider(config.mock_dir, audit)
    if config.offline or config.provider is None:
        return None
    return HttpProvider(config.provider, audit)


def run_pipeline(config: PipelineConfig, now: Callable[[], datetime] | None = None) -> RunReport:
    config.validate()
    stages = parse_stages(config.stages)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(stages={s: "skipped" for s in STAGES})
    try:
        spec = load_spec(config.spec_path)
        db = load_db(config.db_path)
    except (SpecError, ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    ctx = _Context(config, spec, db, make_provider(config, out))

    upstream = config.fingerprint()
    resuming = config.resume
    for stage in stages:
        data = None
        if resuming:
            doc = _load_checkpoint(out, stage, upstream)
            if doc is not None:
                data = doc["data"]
                report.stages[stage] = "resumed"
            else:
                resuming = False  # everything downstream reruns too
        if data is None:
            try:
                data = _RUNNERS[stage](ctx)
            except LlmError as exc:
                report.stages[stage] = "failed"
                report.error = f"{stage}: {type(exc).__name__}: {exc}"
                report.exit_code = 4
                break
            except (StageError, CodegenError, PolicyError, SvaSyntaxError, ValueError) as exc:
                report.stages[stage] = "failed"
                report.error = f"{stage}: {exc}"
                report.exit_code = 3
                break
            report.stages[stage] = "ok"
        ctx.results[stage] = data
        upstream = _save_checkpoint(out, stage, upstream, data)
        files = _materialize(stage, data, out)
        _summarize(report, stage, data, files, out)

    if report.exit_code == 0:
        # stale downstream checkpoints would otherwise survive a shorter run
        for stage in STAGES[len(stages):]:
            _checkpoint_path(out, stage).unlink(missing_ok=True)
    stamp = (now or (lambda: datetime.now(timezone.utc)))().isoformat(timespec="seconds")
    _write(out / REPORT_NAME, _dump(report.to_dict(stamp)))
    return report


def _rel(path: str, out: Path) -> str:
    return Path(path).relative_to(out).as_posix()


def _summarize(report: RunReport, stage: str, data: dict, files: list[str], out: Path) -> None:
    if stage == "cwe":
        report.candidate_count = len(data["candidates"])
    elif stage == "filter":
        report.candidate_count = data["candidate_count"]
        report.filtered_count = data["filtered_count"]
        report.relevance_metric = relevance_metric(data["filtered_count"], data["candidate_count"])
        outcomes: dict[str, int] = {}
        for d in data["diagnostics"]:
            outcomes[d["outcome"]] = outcomes.get(d["outcome"], 0) + 1
        for k, v in sorted(outcomes.items()):
            report.diagnostics[f"filter.{k}"] = v
    elif stage == "sva":
        for item in data["items"]:
            slot = report.artifacts.setdefault(item["cwe_id"], {})
            slot.setdefault("sva", []).append(f"sva/{item['key']}.sv")
        report.diagnostics["sva.generated"] = len(data["items"])
        report.diagnostics["sva.skipped"] = len(data["skipped"])
        report.diagnostics["sva.advisories"] = sum(len(i["advisories"]) for i in data["items"])
    elif stage == "policy":
        for p in data["policies"]:
            cwe = p["policy"]["source_cwe"]
            report.artifacts.setdefault(cwe, {}).setdefault("policy", []).append(p["key"])
        report.diagnostics["policy.generated"] = len(data["policies"])
        report.diagnostics["policy.skipped"] = len(data["skipped"])
    elif stage == "rtl":
        for name, cwes in data["included"].items():
            for cwe in cwes:
                report.artifacts.setdefault(cwe, {}).setdefault("rtl", []).append(f"rtl/{name}")
        report.diagnostics["rtl.warnings"] = len(data["warnings"])
