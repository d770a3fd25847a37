from __future__ import annotations

import copy
import socket

import pytest

from hipot.attacksim import REPLICAS, Scenario, ScenarioError, build_replica, created_map, generate, plan_from_log, replay
from hipot.attacksim.generate import egress_for, policy_for, shell_config_for
from hipot.eventlog import EventKind, LogWriter, encode_event, sessionize
from hipot.forensics import analyze, reconstruct_input
from hipot.sensor import PlainServer, Sensor

BASE = {
    "name": "t", "start": "2006-03-01T00:00:00Z",
    "accounts": [{"name": "ua1", "password": "ua1"}],
    "population": [{"kind": "HumanIntruder", "account": "ua1", "password": "ua1", "new_password": "N3w!pw",
                    "visits": [{"at": 60, "scripts": ["recon"], "passwd": True}]}],
}


def variant(**changes) -> dict:
    d = copy.deepcopy(BASE)
    for k, v in changes.items():
        if k.startswith("p_"):
            d["population"][0][k[2:]] = v
        else:
            d[k] = v
    return d


@pytest.mark.parametrize("doc,needle", [
    (variant(p_kind="Wizard"), "kind"),
    (variant(p_colour="red"), "unknown keys"),
    (variant(p_account="nobody"), "unknown account"),
    (variant(p_visits=[{"at": 1, "scripts": ["nosuch"]}]), "unknown script"),
    (variant(p_visits=[{"at": 1, "commands": ["inband-get nosuch.tgz"]}]), "unknown fixture"),
    (variant(p_new_password=None), "new_password"),
    (variant(p_typo_prob=1.5), "typo_prob"),
    (variant(population=[{"kind": "DictBot", "attempts": 5}]), "more than 10"),
    (variant(population=[{"kind": "Scanner", "probe": [1, 11]}]), "at most 10"),
    (variant(accounts=[{"name": "a", "password": "a"}, {"name": "a", "password": "b"}], population=[]), "duplicate"),
])
def test_validation(doc, needle):
    with pytest.raises(ScenarioError, match=needle):
        Scenario.from_dict(doc)


def log_bytes(records) -> bytes:
    return b"".join(encode_event(r) for r in records)


@pytest.mark.parametrize("name", ["tiny", "operators", "table2"])
def test_same_seed_same_log(name):
    a = generate(Scenario.from_dict(build_replica(name, 5)))
    b = generate(Scenario.from_dict(build_replica(name, 5)))
    assert log_bytes(a.records) == log_bytes(b.records) and a.labels == b.labels


def test_different_seed_differs():
    a = generate(Scenario.from_dict(build_replica("lifecycle", 1)))
    b = generate(Scenario.from_dict(build_replica("lifecycle", 2)))
    assert log_bytes(a.records) != log_bytes(b.records)


def test_empty_population_empty_log():
    c = generate(Scenario.from_dict(variant(population=[])))
    assert c.records == [] and c.report.connections == 0


def test_typo_prob_one_puts_backspace_in_every_line():
    c = generate(Scenario.from_dict(variant(p_typo_prob=1.0, p_visits=[{"at": 60, "scripts": ["recon", "exit"]}])))
    (s,) = [s for s in sessionize(c.records).sessions if s.authenticated]
    lines = reconstruct_input([e.data for e in s.events if e.kind is EventKind.TTY_READ])
    assert lines and all(ln.backspaces >= 1 for ln in lines)


def test_writes_corpus_files(tmp_path):
    c = generate(Scenario.from_dict(BASE), tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"hipot.log", "labels.jsonl", "accounts.txt", "scenario.json", "summary.json"} <= names
    assert c.log_path.read_bytes() == log_bytes(generate(Scenario.from_dict(BASE)).records)


@pytest.mark.parametrize("name", ["fig3", "table2", "operators", "tiny"])
def test_labels_cover_and_match(name, replica, analyzed):
    sc, c = replica(name)
    a = analyzed(name)
    ip_labels = {d["ip"]: d for d in c.labels if d["type"] == "ip"}
    assert set(ip_labels) == set(a.profiles)
    for ip, d in ip_labels.items():
        assert a.profiles[ip].classification.value == d["expected"], ip
    by_sid = {r.session_id: r for r in a.intrusions}
    sess = [d for d in c.labels if d["type"] == "session"]
    assert {d["sid"] for d in sess} == {s.session_id for s in a.log.sessions}
    for d in sess:
        if d.get("verdict") and d["sid"] in by_sid:
            r = by_sid[d["sid"]]
            assert r.operator.verdict.value == d["verdict"]
            if d["tags"] is not None:
                assert sorted(t.value for t in r.tags) == d["tags"]


def test_every_replica_builds():
    for name in REPLICAS:
        Scenario.from_dict(build_replica(name, 1))
    with pytest.raises(KeyError):
        build_replica("nope")


def live_sensor(sc):
    sensor = Sensor(policy_for(sc), egress_for(sc), LogWriter(keep=True), shell_config_for(sc))
    srv = PlainServer(("127.0.0.1", 0), sensor, trust_client_meta=True)
    srv.serve_in_thread()
    return sensor, srv


def classes(records, sc):
    return {ip: p.classification for ip, p in analyze(records, accounts=created_map(sc)).profiles.items()}


def test_replay_single_session():
    sc = Scenario.from_dict(build_replica("tiny", 1))
    c = generate(sc)
    sensor, srv = live_sensor(sc)
    try:
        rep = replay(c.records, *srv.server_address)
    finally:
        srv.shutdown()
        srv.server_close()
    assert not rep.aborted and not rep.errors
    assert classes(sensor.log.records, sc) == classes(c.records, sc)
    assert len(sensor.log.records) == len(c.records)


@pytest.mark.slow
def test_replay_fig3(replica):
    sc, c = replica("fig3")
    sensor, srv = live_sensor(sc)
    try:
        rep = replay(c.records, *srv.server_address, timeout=30)
    finally:
        srv.shutdown()
        srv.server_close()
    assert not rep.aborted
    assert classes(sensor.log.records, sc) == classes(c.records, sc)


def test_replay_without_sensor_reports_error():
    sc = Scenario.from_dict(build_replica("tiny", 1))
    c = generate(sc)
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    rep = replay(c.records, "127.0.0.1", port, timeout=2)
    assert rep.aborted and "cannot reach sensor" in rep.errors[0]


def test_plan_from_log_keeps_probe_attempts():
    sc = Scenario.from_dict(build_replica("fig3", 1))
    c = generate(sc)
    conns = plan_from_log(c.records)
    assert sum(1 for cn in conns for s in cn.steps if s.op == "auth") == len(sessionize(c.records).attempts)
