from __future__ import annotations

import json
from datetime import datetime, timedelta
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hipot.eventlog import UTC, AuthAttempt
from hipot.forensics import SourceClass, analyze
from hipot.forensics.sources import SourceProfile
from hipot.report import build_report, correlate_sensors, partition_report, percent, render_report, top_accounts

from .oracles import percent_half_up

T0 = datetime(2006, 3, 1, tzinfo=UTC)


def attempts_from(counts: dict[str, int]) -> list[AuthAttempt]:
    out, seq = [], 0
    for user, n in counts.items():
        for i in range(n):
            seq += 1
            out.append(AuthAttempt(seq, T0 + timedelta(seconds=seq), "198.18.0.1", user.encode(),
                                   f"pw{i % 3}".encode(), False))
    return out


def profile(ip: str, cls: SourceClass, successes: int = 0) -> SourceProfile:
    return SourceProfile(ip, T0, T0, successes=successes, classification=cls)


@given(st.integers(0, 10**7), st.integers(1, 10**7))
def test_percent_matches_integer_oracle(part, whole):
    assert f"{percent(part, whole)}" == percent_half_up(part, whole)


@pytest.mark.parametrize("part,whole,text", [(34251, 248717, "13.77"), (1, 8, "12.50"), (1, 3, "33.33"),
                                             (2, 3, "66.67"), (1, 200, "0.50"), (0, 0, "0.00")])
def test_percent_examples(part, whole, text):
    assert f"{percent(part, whole)}" == text


def test_top_accounts_ties_by_name():
    rows = top_accounts(attempts_from({"zed": 3, "abe": 3, "root": 5, "x": 1}), k=3)
    assert [r.account for r in rows] == [b"root", b"abe", b"zed"]
    assert rows[0].passwords == 3 and rows[0].percentage == Decimal("41.67")


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=4), st.integers(1, 40), max_size=15),
       st.integers(1, 20))
def test_top_percentages_bounded(counts, k):
    rows = top_accounts(attempts_from(counts), k=k)
    assert len(rows) == min(k, len(counts))
    # each row rounds by at most half a hundredth
    assert sum(r.percentage for r in rows) <= Decimal(100) + Decimal("0.005") * len(rows)
    assert [r.attempts for r in rows] == sorted((r.attempts for r in rows), reverse=True)


def test_partition_counts():
    ps = [profile("1", SourceClass.DICTIONARY, 1), profile("2", SourceClass.DICTIONARY),
          profile("3", SourceClass.INTRUDER), profile("4", SourceClass.SCANNER), profile("5", SourceClass.UNKNOWN)]
    p = partition_report(ps)
    assert (p["total"], p["DictionaryAttacker"], p["Intruder"], p["other"]) == (5, 2, 1, 2)
    assert p["dictionary_succeeded"] == 1 and p["dictionary_failed"] == 1


CLASSES = st.sampled_from(list(SourceClass))


@given(st.dictionaries(st.integers(0, 60).map(str), CLASSES, max_size=40),
       st.sets(st.integers(0, 60).map(str)), st.sets(st.integers(0, 60).map(str)))
def test_correlation_properties(a_cls, b1, b2):
    a = {ip: profile(ip, c) for ip, c in a_cls.items()}
    self_corr = correlate_sensors(a, a)
    assert all(v["overlap"] == v["size"] for v in self_corr.values())
    small = correlate_sensors(a, b1)
    big = correlate_sensors(a, b1 | b2)
    for cls in small:
        assert small[cls]["overlap"] <= big[cls]["overlap"] <= big[cls]["size"]


def test_empty_log_has_headers_only():
    text = render_report(build_report(analyze([])), "text").decode()
    assert "Connection attempts: 0" in text and "Source addresses" in text
    assert "Most tried accounts" not in text and "Intrusions per account" not in text


def test_render_is_deterministic(analyzed):
    a = analyzed("tiny")
    doc = build_report(a)
    assert render_report(doc, "json") == render_report(build_report(analyzed("tiny")), "json")
    assert render_report(doc, "text") == render_report(doc, "text")


def test_text_and_json_agree(analyzed):
    doc = build_report(analyzed("tiny"))
    parsed = json.loads(render_report(doc, "json"))
    text = render_report(doc, "text").decode()
    for row in parsed["top_accounts"]:
        assert f"{row['percentage']}%" in text
    assert parsed["partition"]["Intruder"] == 1


def test_unknown_format():
    with pytest.raises(ValueError):
        render_report({}, "html")


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=4), st.integers(1, 40), min_size=1, max_size=15))
def test_exhaustive_table_sums_to_100(counts):
    rows = top_accounts(attempts_from(counts), k=None)
    assert abs(sum(r.percentage for r in rows) - 100) <= Decimal("0.005") * len(rows)


# intrusions, passwords, source addresses per compromised account
PER_ACCOUNT = {"ua2": (1, 1, 1), "ua4": (13, 2, 2), "ua5": (1, 1, 1), "ua8": (1, 1, 1), "ua10": (9, 2, 2),
               "ua13": (6, 1, 5), "ua16": (5, 1, 3), "ua17": (2, 1, 1)}


def test_intrusions_per_account_rows(analyzed):
    doc = build_report(analyzed("operators"))
    got = {r["account"]: (r["intrusions"], r["passwords"], r["ips"]) for r in doc["intrusions_per_account"]}
    assert got == PER_ACCOUNT
    assert sum(v[0] for v in got.values()) == 38 and sum(v[2] for v in got.values()) == 16
