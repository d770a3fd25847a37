from __future__ import annotations

import socket
import threading
from datetime import datetime, timedelta

import pytest

from hipot.eventlog import UTC, EventKind, LogWriter, sessionize
from hipot.sensor import AllowWindow, CredentialPolicy, EgressPolicy, PlainServer, PolicyError, Sensor, SensorError

T0 = datetime(2006, 3, 1, tzinfo=UTC)


def at(seconds: float) -> datetime:
    return T0 + timedelta(seconds=seconds)


@pytest.fixture
def sensor():
    policy = CredentialPolicy.from_simple({"ua2": "123456", "ua4": "ua4", "root": ("x9!Qa7#long", False)}, created=T0)
    return Sensor(policy, log_writer=LogWriter(keep=True))


def login(sensor, user=b"ua2", pw=b"123456", ts=1.0):
    sid = sensor.connect("100.64.0.1", at(ts))
    assert sensor.authenticate(sid, user, pw, at(ts + 0.1)).granted
    sh = sensor.open_shell(sid)
    sh.start(at(ts + 0.2))
    return sid, sh


def test_weak_password_granted(sensor):
    sid = sensor.connect("198.18.0.1", at(1))
    res = sensor.authenticate(sid, b"ua2", b"123456", at(2))
    assert res.granted and res.session_id == sid


@pytest.mark.parametrize("user,pw", [(b"root", b"root"), (b"root", b"123456"), (b"nobody", b"x"), (b"ua2", b"")])
def test_denied_and_logged(sensor, user, pw):
    sid = sensor.connect("198.18.0.1", at(1))
    assert not sensor.authenticate(sid, user, pw, at(2)).granted
    auths = [r for r in sensor.log.records if r.kind is EventKind.AUTH]
    assert len(auths) == 1 and auths[0].username == user and not auths[0].success


def test_unlimited_retries_all_logged(sensor):
    sid = sensor.connect("198.18.0.1", at(0))
    for i in range(500):
        sensor.authenticate(sid, b"root", str(i).encode(), at(i))
    assert sum(r.kind is EventKind.AUTH for r in sensor.log.records) == 500


def test_account_not_usable_before_creation():
    policy = CredentialPolicy.from_simple({"ua2": "123456"}, created=at(100))
    assert not policy.check(b"ua2", b"123456", at(99))
    assert policy.check(b"ua2", b"123456", at(100))


def test_passwd_in_session_changes_credentials(sensor):
    sid, sh = login(sensor)
    for i, line in enumerate([b"passwd\r", b"123456\r", b"Str0ng!pw\r", b"Str0ng!pw\r"]):
        out = sh.feed(line, at(2 + i))
    assert b"updated successfully" in out
    sensor.disconnect(sid, at(10))
    s2 = sensor.connect("198.18.0.9", at(11))
    assert not sensor.authenticate(s2, b"ua2", b"123456", at(12)).granted
    s3 = sensor.connect("100.64.0.1", at(13))
    assert sensor.authenticate(s3, b"ua2", b"Str0ng!pw", at(14)).granted
    # the history keeps the old password valid for times before the change
    assert sensor.policy.check(b"ua2", b"123456", at(1))


def test_password_state_persists(tmp_path, sensor):
    state = tmp_path / "state.json"
    sensor.state_path = str(state)
    assert sensor.change_password(b"ua4", b"ua4", b"N3w!", at(5))
    fresh = CredentialPolicy.from_simple({"ua2": "123456", "ua4": "ua4"}, created=T0)
    fresh.load_state(state)
    assert fresh.check(b"ua4", b"N3w!", at(6)) and not fresh.check(b"ua4", b"ua4", at(6))


def test_change_password_is_compare_and_set():
    policy = CredentialPolicy.from_simple({"ua4": "ua4"}, created=T0)
    assert not policy.change_password(b"ua4", b"wrong", b"x", at(1))
    assert policy.change_password(b"ua4", b"ua4", b"x", at(1))
    assert not policy.change_password(b"ua4", b"ua4", b"y", at(2))


def test_concurrent_passwd_single_winner():
    policy = CredentialPolicy.from_simple({"ua4": "ua4"}, created=T0)
    wins = []
    barrier = threading.Barrier(8)

    def go(i):
        barrier.wait()
        wins.append(policy.change_password(b"ua4", b"ua4", f"n{i}".encode(), at(1)))

    threads = [threading.Thread(target=go, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert wins.count(True) == 1


def test_chunks_logged_as_delivered(sensor):
    sid, sh = login(sensor)
    for i, b in enumerate(b"w\r"):
        sh.feed(bytes([b]), at(3 + i))
    sh.feed(b"uname -a\n", at(6))
    reads = [r.data for r in sensor.log.records if r.kind is EventKind.TTY_READ]
    assert reads == [b"w", b"\r", b"uname -a\n"]
    execs = [r.argv[0] for r in sensor.log.records if r.kind is EventKind.EXEC]
    assert execs == ["w", "uname"]


def test_output_byte_accounting(sensor):
    sid, sh = login(sensor)
    sent = bytearray()
    for i, line in enumerate([b"ls -la /\n", b"cat /etc/passwd\n", b"ps aux\n"]):
        sent += sh.feed(line, at(3 + i))
    writes = [r.data for r in sensor.log.records if r.kind is EventKind.TTY_WRITE]
    assert b"".join(writes[1:]) == bytes(sent)


def test_banner_includes_motd(sensor):
    sid, sh = login(sensor)
    banner = next(r.data for r in sensor.log.records if r.kind is EventKind.TTY_WRITE)
    assert sensor.shell_config.bait_address.encode() in banner


def test_immediate_disconnect(sensor):
    sid = sensor.connect("172.16.0.5", at(1))
    sensor.disconnect(sid, at(2))
    (s,) = sessionize(sensor.log.records).sessions
    assert [e.kind for e in s.events] == [EventKind.CONNECT, EventKind.DISCONNECT]


def test_exit_closes_session(sensor):
    sid, sh = login(sensor)
    sh.feed(b"exit\n", at(5))
    assert sh.closed and sid not in sensor.open_connections
    last = sensor.log.records[-1]
    assert last.kind is EventKind.DISCONNECT and last.reason == "logout"


def test_shellbox_crash_fails_closed(sensor, monkeypatch):
    sid, sh = login(sensor)
    import hipot.sensor.core as core

    def boom(*a, **kw):
        raise RuntimeError("boom")

    monkeypatch.setattr(core, "execute", boom)
    sh.feed(b"ls\n", at(5))
    kinds = [r.kind for r in sensor.log.records]
    assert EventKind.INCIDENT in kinds and kinds[-1] is EventKind.DISCONNECT
    with pytest.raises(SensorError):
        sh.feed(b"ls\n", at(6))


def test_shell_needs_authentication(sensor):
    sid = sensor.connect("1.2.3.4", at(1))
    with pytest.raises(SensorError):
        sensor.open_shell(sid)


def test_egress_verdicts():
    pol = EgressPolicy([AllowWindow("http", at(100), at(200))], bait_address="10.0.0.23")
    assert pol.verdict("203.0.113.5", 80, "http", at(50)) == "deny"
    assert pol.verdict("203.0.113.5", 80, "http", at(150)) == "allow"
    assert pol.verdict("203.0.113.5", 21, "ftp", at(150)) == "deny"
    assert pol.verdict("100.64.0.1", 22, "inband", at(50)) == "allow"
    assert pol.verdict("10.0.0.23", 22, "ssh", at(150)) == "deny" and pol.is_bait("10.0.0.23")


def test_bait_connection_marked(sensor):
    sid, sh = login(sensor)
    sh.feed(b"ssh 10.0.0.23\n", at(5))
    eg = [r for r in sensor.log.records if r.kind is EventKind.EGRESS]
    assert eg and eg[-1].bait and eg[-1].verdict == "deny"


def test_accounts_file(tmp_path):
    f = tmp_path / "accounts.txt"
    f.write_text("# comment\nroot:x9!long:strong\nua2:123456:weak:2006-03-01T00:00:00.000Z\n")
    pol = CredentialPolicy.load(f)
    assert pol.usernames == ["root", "ua2"] and not pol.accounts[b"root"].weak
    assert pol.accounts[b"ua2"].created_ts == T0
    f.write_text("ua2:123456:medium\n")
    with pytest.raises(PolicyError):
        CredentialPolicy.load(f)


def test_egress_file(tmp_path):
    f = tmp_path / "egress.txt"
    f.write_text("http 2006-03-01T00:00:00Z 2006-03-01T01:00:00Z  # short window\n")
    pol = EgressPolicy.load(f)
    assert pol.verdict("x", 80, "http", at(60)) == "allow"
    f.write_text("http 2006-03-01T01:00:00Z 2006-03-01T00:00:00Z\n")
    with pytest.raises(PolicyError):
        EgressPolicy.load(f)


class PlainClient:
    def __init__(self, address):
        self.sock = socket.create_connection(address, timeout=5)
        self.rfile = self.sock.makefile("rb")
        assert self.rfile.readline().startswith(b"HIPOT-PLAIN")

    def call(self, line: bytes) -> tuple[bytes, bytes]:
        self.sock.sendall(line + b"\n")
        out = b""
        while True:
            reply = self.rfile.readline().rstrip(b"\n")
            if reply.startswith(b"OUT "):
                out += bytes.fromhex(reply[4:].decode())
                continue
            return reply, out

    def close(self):
        self.rfile.close()
        self.sock.close()


@pytest.fixture
def plain(sensor):
    srv = PlainServer(("127.0.0.1", 0), sensor, trust_client_meta=True)
    srv.serve_in_thread()
    yield srv
    srv.shutdown()
    srv.server_close()


def test_plain_protocol_session(plain, sensor):
    c = PlainClient(plain.server_address)
    assert c.call(b"FROM 100.64.3.3")[0] == b"OK"
    assert c.call(b"TS 2006-03-01T00:00:10.000Z")[0] == b"OK"
    assert c.call(b"USER ua2")[0] == b"OK"
    reply, _ = c.call(b"PASS 123456")
    assert reply.startswith(b"OK s")
    assert c.call(b"SHELL")[0] == b"ACK"
    reply, out = c.call(b"IN " + b"uname -a\n".hex().encode())
    assert reply == b"ACK" and b"Linux" in out
    assert c.call(b"TXT exit")[0] == b"CLOSED"
    c.close()
    (s,) = sessionize(sensor.log.records).sessions
    assert s.source_ip == "100.64.3.3" and s.start_ts == at(10) and s.is_intrusion


def test_plain_denied_and_bye(plain, sensor):
    c = PlainClient(plain.server_address)
    c.call(b"USER root")
    assert c.call(b"PASS root")[0] == b"DENIED"
    assert c.call(b"BYE")[0] == b"BYE"
    c.close()
    plain.shutdown()
    kinds = [r.kind for r in sensor.log.records]
    assert kinds[0] is EventKind.CONNECT and kinds[-1] is EventKind.DISCONNECT


def test_plain_meta_refused_when_untrusted(sensor):
    srv = PlainServer(("127.0.0.1", 0), sensor)
    srv.serve_in_thread()
    try:
        c = PlainClient(srv.server_address)
        assert c.call(b"FROM 9.9.9.9")[0].startswith(b"ERR")
        c.call(b"BYE")
        c.close()
    finally:
        srv.shutdown()
        srv.server_close()
    assert sensor.log.records[0].ip == "127.0.0.1"


def test_dropped_channel_still_logs_disconnect(plain, sensor):
    c = PlainClient(plain.server_address)
    c.call(b"USER ua2")
    c.call(b"PASS 123456")
    c.close()
    for _ in range(100):
        if any(r.kind is EventKind.DISCONNECT for r in sensor.log.records):
            break
        threading.Event().wait(0.02)
    assert sensor.log.records[-1].kind is EventKind.DISCONNECT


def test_ssh_transport_end_to_end(sensor):
    paramiko = pytest.importorskip("paramiko")
    from hipot.sensor.ssh import handle_ssh_client

    listener = socket.socket()
    listener.bind(("127.0.0.1", 0))
    listener.listen(1)
    key = paramiko.RSAKey.generate(1024)

    def serve():
        conn, addr = listener.accept()
        handle_ssh_client(conn, addr, sensor, key, timeout=10)

    t = threading.Thread(target=serve, daemon=True)
    t.start()
    client = paramiko.SSHClient()
    client.set_missing_host_key_policy(paramiko.AutoAddPolicy())
    client.connect("127.0.0.1", port=listener.getsockname()[1], username="ua2", password="123456",
                   look_for_keys=False, allow_agent=False, timeout=10)
    chan = client.invoke_shell()
    chan.settimeout(10)
    for ch in "uname -a\rexit\r":
        chan.send(ch.encode())
    buf = b""
    while True:
        data = chan.recv(4096)
        if not data:
            break
        buf += data
    client.close()
    t.join(10)
    listener.close()
    assert b"Linux" in buf
    slog = sessionize(sensor.log.records)
    s = next(s for s in slog.sessions if s.authenticated)
    # keystrokes may coalesce in transit; every byte is still accounted for exactly once
    assert s.is_intrusion and b"".join(s.tty_reads()) == b"uname -a\rexit\r"
