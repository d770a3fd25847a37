from __future__ import annotations

import hashlib
import json
import signal
import socket
import subprocess
import sys
import time

import pytest

from hipot import __version__
from hipot.attacksim import read_labels
from hipot.cli import main


def run(*argv: str) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    assert run("simulate", "--replica", "tiny", "--out", out) == 0
    return out


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == f"hipot {__version__} (hipot-log v1)"


def test_missing_log_exit_1(tmp_path, capsys):
    assert run("analyze", "--log", tmp_path / "none.log") == 1
    assert "none.log" in capsys.readouterr().err


def test_bad_flag_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--log", "x", "--frobnicate"])
    assert exc.value.code == 2


def test_unknown_replica_exit_1():
    assert run("simulate", "--replica", "nope", "--out", "x") == 1


def test_simulate_then_analyze_matches_labels(tmp_path):
    corpus = tmp_path / "c"
    assert run("simulate", "--replica", "operators", "--out", corpus) == 0
    assert run("analyze", "--log", corpus / "hipot.log", "--accounts", corpus / "accounts.txt",
               "--out", tmp_path / "a.json") == 0
    doc = json.loads((tmp_path / "a.json").read_text())
    got = {s["ip"]: s["classification"] for s in doc["sources"]}
    want = {d["ip"]: d["expected"] for d in read_labels(corpus / "labels.jsonl") if d["type"] == "ip"}
    assert got == want and doc["log_format"] == "hipot-log v1"


def test_scenario_file_round_trip(tmp_path):
    assert run("simulate", "--replica", "tiny", "--emit-scenario", tmp_path / "s.json") == 0
    assert run("simulate", "--scenario", tmp_path / "s.json", "--out", tmp_path / "c") == 0
    assert (tmp_path / "c" / "hipot.log").stat().st_size > 0


def test_bad_scenario_exit_1(tmp_path):
    (tmp_path / "s.json").write_text('{"population": [{"kind": "Wizard"}]}')
    assert run("simulate", "--scenario", tmp_path / "s.json", "--out", tmp_path / "c") == 1


def test_analysis_leaves_log_untouched(tiny_corpus, tmp_path):
    log = tiny_corpus / "hipot.log"
    before = hashlib.sha256(log.read_bytes()).hexdigest()
    run("ingest", "--log", log, "--out", tmp_path / "i.json")
    run("analyze", "--log", log, "--out", tmp_path / "a.json")
    run("report", "--log", log, "--out", tmp_path / "r.txt")
    assert hashlib.sha256(log.read_bytes()).hexdigest() == before


def test_ingest_summary(tiny_corpus, tmp_path):
    assert run("ingest", "--log", tiny_corpus / "hipot.log", "--out", tmp_path / "i.json") == 0
    s = json.loads((tmp_path / "i.json").read_text())
    assert s["intrusions"] == 1 and s["truncated_tail_bytes"] == 0


def test_ingest_reports_truncated_tail(tiny_corpus, tmp_path):
    log = tmp_path / "cut.log"
    log.write_bytes((tiny_corpus / "hipot.log").read_bytes() + b'{"v":1,"seq":')
    assert run("ingest", "--log", log, "--out", tmp_path / "i.json") == 0
    assert json.loads((tmp_path / "i.json").read_text())["truncated_tail_bytes"] == 13


def test_corrupt_log_exit_1(tmp_path, capsys):
    (tmp_path / "bad.log").write_bytes(b"not json\n{}\n")
    assert run("analyze", "--log", tmp_path / "bad.log") == 1
    assert "line 1" in capsys.readouterr().err


def test_flag_beats_config(tiny_corpus, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"report": {"format": "json", "top": 1}}))
    assert run("report", "--log", tiny_corpus / "hipot.log", "--config", cfg, "--out", tmp_path / "r1") == 0
    doc = json.loads((tmp_path / "r1").read_text())
    assert len(doc["top_accounts"]) == 1
    assert run("report", "--log", tiny_corpus / "hipot.log", "--config", cfg, "--format", "text",
               "--out", tmp_path / "r2") == 0
    assert (tmp_path / "r2").read_text().startswith("hipot ")


def test_missing_region_map_warns(tiny_corpus, tmp_path, caplog):
    assert run("analyze", "--log", tiny_corpus / "hipot.log", "--region-map", tmp_path / "nope.tsv",
               "--out", tmp_path / "a.json") == 0
    assert "falling back" in caplog.text


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_sense_plain_mode_logs_and_stops(tmp_path):
    (tmp_path / "accounts.txt").write_text("ua1:ua1:weak\n")
    port = free_port()
    proc = subprocess.Popen([sys.executable, "-m", "hipot.cli", "sense", "--mode", "plain",
                             "--listen", f"127.0.0.1:{port}", "--accounts", str(tmp_path / "accounts.txt"),
                             "--log", str(tmp_path / "s.log")], stderr=subprocess.PIPE)
    try:
        for _ in range(100):
            try:
                sock = socket.create_connection(("127.0.0.1", port), timeout=2)
                break
            except OSError:
                time.sleep(0.05)
        else:
            pytest.fail("sensor did not start")
        with sock, sock.makefile("rb") as f:
            f.readline()
            sock.sendall(b"USER ua1\nPASS wrong\nBYE\n")
            while f.readline().strip() != b"BYE":
                pass
    finally:
        proc.send_signal(signal.SIGTERM)
        proc.wait(timeout=10)
    assert proc.returncode == 0
    kinds = [json.loads(ln)["kind"] for ln in (tmp_path / "s.log").read_text().splitlines()]
    assert "auth" in kinds and kinds[-1] == "disconnect"
