"""Regenerate the canned LLM responses used by offline runs on the MIT-CEP fixture.

    python3 tools/make_mocks.py [--out fixtures/mocks/mit_cep]

The enumeration reply is the unfiltered CWE list fixture, relevance replies
are "No" for every id missing from the DB, and each assertion reply wraps the
offline pattern for that (CWE, IP) pair in a short chat-style answer. The
race-condition reply drops the ``@`` before its clock so offline runs also
exercise the corrector.
"""
from __future__ import annotations

import argparse
import shutil
from pathlib import Path

from socsec.cwe_db import load_db, lookup
from socsec.cwe_filter import FilterConfig, Level, filter_cwes
from socsec.llm_client import MockProvider, parse_cwe_list
from socsec.query_gen import cwe_enumeration_query, load_assumptions, relevance_query, sva_generation_query
from socsec.spec_model import load_spec
from socsec.sva import instantiate_template, render_assertion

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"


def build(out: Path) -> list[Path]:
    spec = load_spec(FIX / "mit_cep.json")
    db = load_db(FIX / "mit_cep_db.tsv")
    if out.exists():
        shutil.rmtree(out)
    mock = MockProvider(out)
    written = []

    listing = (FIX / "mit_cep_candidates.txt").read_text(encoding="utf-8")
    reply = "Here are CWEs that may apply to this SoC:\n\n" + "".join(
        f"{i}. {line}\n" for i, line in enumerate(listing.splitlines(), 1) if line.strip())
    written.append(mock.record(cwe_enumeration_query(spec, load_assumptions()), reply))

    candidates = parse_cwe_list(reply)
    for cand in candidates:
        if lookup(db, cand.id) is None:
            answer = f"No. {cand.id} concerns software systems and does not apply to this hardware design."
            written.append(mock.record(relevance_query(cand, spec), answer))

    result = filter_cwes(candidates, db, spec, None, FilterConfig())
    for f in result.filtered:
        targets = ([None] if Level.BUS in f.levels else []) + [spec.ip_named(n) for n in f.matched_ips]
        for ip in targets:
            text = render_assertion(instantiate_template(f.entry, ip, spec))
            if f.cwe_id == "CWE-362" and ip is None:
                text = text.replace("@(posedge", "(posedge", 1)
            where = f"the {ip.label} IP" if ip else "the shared bus"
            answer = (f"The following SystemVerilog assertion checks {f.cwe_id} on {where}.\n\n"
                      f"```systemverilog\n{text}```\n\nAdjust the signal names to match your design.\n")
            written.append(mock.record(sva_generation_query(f.entry, spec, ip), answer))
    return written


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=FIX / "mocks" / "mit_cep")
    args = ap.parse_args()
    for p in build(args.out):
        print(p.relative_to(ROOT) if p.is_relative_to(ROOT) else p)


if __name__ == "__main__":
    main()
