from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import settings

from socsec.cwe_db import load_db
from socsec.spec_model import load_spec

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

settings.register_profile("default", deadline=None)
settings.load_profile("default")

_criteria: dict[int, dict] = {}


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def mit_cep():
    return load_spec(FIXTURES / "mit_cep.json")


@pytest.fixture(scope="session")
def mit_cep_db():
    return load_db(FIXTURES / "mit_cep_db.tsv")


@pytest.fixture(scope="session")
def similarity_db():
    return load_db(FIXTURES / "similarity_db.tsv")


@pytest.fixture(scope="session")
def seed_db():
    return load_db()


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            n, title = mark.args
            _criteria.setdefault(n, {"title": title, "tests": 0, "failed": 0})
            _criteria[n]["tests"] += 1


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    entry = _criteria[mark.args[0]]
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry["failed"] += 1
        entry.setdefault("which", []).append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        c = _criteria[n]
        status = "PASS" if c["failed"] == 0 else "FAIL"
        detail = f"{c['tests']} test(s)"
        if c["failed"]:
            detail += ", failing: " + ", ".join(c["which"])
        tr.write_line(f"criterion {n}: {status}  {c['title']}  ({detail})")
