from __future__ import annotations

import functools

import pytest

from hipot.attacksim import Scenario, build_replica, created_map, generate
from hipot.forensics import analyze

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@functools.lru_cache(maxsize=None)
def corpus(name: str, seed: int = 1):
    sc = Scenario.from_dict(build_replica(name, seed))
    c = generate(sc)
    return sc, c


@functools.lru_cache(maxsize=None)
def analysis(name: str, seed: int = 1):
    sc, c = corpus(name, seed)
    return analyze(c.records, accounts=created_map(sc))


@pytest.fixture
def replica():
    return corpus


@pytest.fixture
def analyzed():
    return analysis


@pytest.fixture
def record_acceptance():
    def record(n: int, ok: bool, detail: str = "") -> None:
        ACCEPTANCE[n] = (ok, detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
