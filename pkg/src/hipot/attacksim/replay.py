"""Play a recorded event log against a live sensor over the plain protocol.

The log is cut back into per-connection plans (connect, auth attempts, shell,
keystroke chunks, disconnect) and the steps are sent in the original global
order, each preceded by ``TS`` so the sensor stamps them with log time. This
needs a sensor started with ``--trust-client-meta``; without it the replay
still runs but every connection appears from the replaying host at wall-clock
time.
"""
from __future__ import annotations

import socket
from collections import defaultdict

from ..eventlog import AuthAttempt, EventKind, Record, format_ts
from .generate import Conn, Step, TransmissionReport, drive
from .scenario import to_ms


class ReplayError(ConnectionError):
    pass


def plan_from_log(records: list[Record]) -> list[Conn]:
    by_sid: dict[str, list[Record]] = defaultdict(list)
    conns: list[Conn] = []
    for r in records:
        if isinstance(r, AuthAttempt) and r.session_id is None:
            # probe logged without a connection record; give it its own connection
            c = Conn(idx=len(conns), ip=r.source_ip, persona=-1, instance=0, role="probe")
            t = to_ms(r.ts)
            c.steps = [Step(t, "connect", (r.source_ip,)), Step(t, "auth", (r.username, r.password)),
                       Step(t, "disconnect")]
            conns.append(c)
        else:
            by_sid[r.session_id].append(r)
    for sid, recs in by_sid.items():
        ip = next((r.ip for r in recs if getattr(r, "kind", None) is EventKind.CONNECT), None)
        ip = ip or next((r.source_ip for r in recs if isinstance(r, AuthAttempt)), None)
        c = Conn(idx=len(conns), ip=ip, persona=-1, instance=0, role="replay")
        c.sid = sid  # original id, replaced by the live sensor's on connect
        shell = False
        for r in recs:
            t = to_ms(r.ts)
            if isinstance(r, AuthAttempt):
                c.steps.append(Step(t, "auth", (r.username, r.password)))
            elif r.kind is EventKind.CONNECT:
                c.steps.append(Step(t, "connect", (r.ip,)))
            elif r.kind is EventKind.TTY_WRITE and not shell:
                c.steps.append(Step(t, "shell"))
                shell = True
            elif r.kind is EventKind.TTY_READ:
                c.steps.append(Step(t, "input", (r.data,)))
            elif r.kind is EventKind.DISCONNECT and r.reason not in ("logout", "incident"):
                c.steps.append(Step(t, "disconnect"))
        if not c.steps or c.steps[0].op != "connect":
            c.steps.insert(0, Step(c.steps[0].ts if c.steps else 0, "connect", (ip,)))
        conns.append(c)
    return conns


class PlainTransport:
    """One socket per connection, driven from a single thread in log order."""

    FINAL = (b"ACK", b"CLOSED", b"OK", b"DENIED", b"BYE")

    def __init__(self, host: str, port: int, *, timeout: float = 10.0):
        self.address = (host, port)
        self.timeout = timeout
        self._socks: dict[int, tuple[socket.socket, object]] = {}
        self.meta_rejected = False

    def _open(self, conn: Conn):
        try:
            sock = socket.create_connection(self.address, timeout=self.timeout)
        except OSError as exc:
            raise ReplayError(f"cannot reach sensor at {self.address[0]}:{self.address[1]}: {exc}") from exc
        rfile = sock.makefile("rb")
        greeting = rfile.readline()
        if not greeting.startswith(b"HIPOT-PLAIN"):
            sock.close()
            raise ReplayError(f"unexpected greeting {greeting[:40]!r}")
        self._socks[conn.idx] = (sock, rfile)
        return sock, rfile

    def _call(self, conn: Conn, line: bytes) -> tuple[bytes, bytes]:
        """Send one command; returns (final reply line, concatenated OUT payload)."""
        sock, rfile = self._socks[conn.idx]
        sock.sendall(line + b"\n")
        out = bytearray()
        while True:
            reply = rfile.readline()
            if not reply:
                raise ReplayError(f"sensor closed connection {conn.idx} unexpectedly")
            reply = reply.rstrip(b"\r\n")
            if reply.startswith(b"OUT "):
                out += bytes.fromhex(reply[4:].decode())
                continue
            if reply.startswith(b"ERR") or reply.split(b" ", 1)[0] in self.FINAL:
                return reply, bytes(out)

    def _at(self, conn: Conn, ts) -> None:
        if not self.meta_rejected:
            reply, _ = self._call(conn, b"TS " + format_ts(ts).encode())
            self.meta_rejected = reply.startswith(b"ERR")

    def connect(self, conn: Conn, ts) -> None:
        self._open(conn)
        if not self.meta_rejected and conn.ip:
            reply, _ = self._call(conn, b"FROM " + conn.ip.encode())
            self.meta_rejected = reply.startswith(b"ERR")
        self._at(conn, ts)
        self._call(conn, b"HELLO")

    def auth(self, conn: Conn, ts, user: bytes, pw: bytes) -> bool:
        if b"\n" in user or b"\n" in pw:
            raise ReplayError("credentials containing a newline cannot be sent over the plain protocol")
        self._at(conn, ts)
        self._call(conn, b"USER " + user)
        reply, _ = self._call(conn, b"PASS " + pw)
        if reply.startswith(b"OK "):
            conn.sid = reply[3:].decode()
            return True
        return False

    def shell(self, conn: Conn, ts) -> None:
        self._at(conn, ts)
        self._call(conn, b"SHELL")

    def input(self, conn: Conn, ts, data: bytes) -> bool:
        self._at(conn, ts)
        reply, _ = self._call(conn, b"IN " + data.hex().encode())
        if reply == b"CLOSED":
            self._close(conn)
            return False
        return True

    def disconnect(self, conn: Conn, ts) -> None:
        if conn.idx in self._socks:
            self._at(conn, ts)
            self._call(conn, b"BYE")
            self._close(conn)

    def reset(self, ts, account, password) -> None:
        raise ReplayError("password resets cannot be sent over the plain protocol")

    def _close(self, conn: Conn) -> None:
        sock, rfile = self._socks.pop(conn.idx)
        rfile.close()
        sock.close()

    def close(self) -> None:
        for idx in list(self._socks):
            sock, rfile = self._socks.pop(idx)
            rfile.close()
            sock.close()


def replay(records: list[Record], host: str, port: int, *, timeout: float = 10.0) -> TransmissionReport:
    conns = plan_from_log(records)
    transport = PlainTransport(host, port, timeout=timeout)
    try:
        report = drive(conns, transport)
    finally:
        transport.close()
    if transport.meta_rejected:
        report.errors.append("sensor does not trust client metadata; source addresses and times are live values")
    return report
