"""Transport-independent sensor: connection bookkeeping, auth, shell bridging, egress.

Transports (plain TCP, ssh) call into :class:`Sensor`; every call takes an
explicit timestamp so that synthetic time (the simulator) and wall-clock time
(a live listener) go through the same code.
"""
from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass
from datetime import datetime
from typing import Callable

from ..eventlog import EventKind, LogWriter, b2s, truncate_ms, utcnow
from ..shellbox import ExecContext, ExecRecord, PendingInput, SandboxState, ShellConfig, execute
from ..shellbox.state import login, logout, new_sandbox
from ..tty import BACKSPACES, LineAssembler
from .policy import CredentialPolicy, EgressPolicy

log = logging.getLogger(__name__)


class SensorError(RuntimeError):
    pass


@dataclass(frozen=True)
class AuthResult:
    granted: bool
    session_id: str | None = None


@dataclass
class _Conn:
    sid: str
    ip: str
    account: bytes | None = None
    password: bytes | None = None
    shell: "ShellSession | None" = None
    closed: bool = False


class Sensor:
    def __init__(self, policy: CredentialPolicy, egress: EgressPolicy | None = None,
                 log_writer: LogWriter | None = None, shell_config: ShellConfig | None = None,
                 *, clock: Callable[[], datetime] = utcnow, sid_prefix: str = "s",
                 state_path: str | None = None):
        self.policy = policy
        self.shell_config = shell_config or ShellConfig()
        self.egress = egress or EgressPolicy(bait_address=self.shell_config.bait_address)
        if self.egress.bait_address is None:
            self.egress.bait_address = self.shell_config.bait_address
        self.log = log_writer or LogWriter()
        self.clock = clock
        self.state_path = state_path
        self._sid_prefix = sid_prefix
        self._counter = itertools.count(1)
        self._lock = threading.Lock()
        self._conns: dict[str, _Conn] = {}
        self._sandboxes: dict[bytes, SandboxState] = {}
        self._sandbox_locks: dict[bytes, threading.Lock] = {}

    def _ts(self, ts: datetime | None) -> datetime:
        return truncate_ms(ts if ts is not None else self.clock())

    # --- connection lifecycle ---------------------------------------------

    def connect(self, ip: str, ts: datetime | None = None) -> str:
        with self._lock:
            sid = f"{self._sid_prefix}{next(self._counter):06d}"
            self._conns[sid] = _Conn(sid, ip)
        self.log.event(self._ts(ts), sid, EventKind.CONNECT, ip=ip)
        return sid

    def _conn(self, sid: str) -> _Conn:
        conn = self._conns.get(sid)
        if conn is None or conn.closed:
            raise SensorError(f"no open connection {sid!r}")
        return conn

    def authenticate(self, sid: str, username: bytes, password: bytes,
                     ts: datetime | None = None) -> AuthResult:
        """Check one credential pair. Every call is logged, granted or not."""
        ts = self._ts(ts)
        conn = self._conn(sid)
        if conn.account is not None:
            raise SensorError(f"{sid} already authenticated")
        ok = self.policy.check(username, password, ts)
        self.log.auth(ts, conn.ip, username, password, ok, sid)
        if not ok:
            return AuthResult(False)
        conn.account, conn.password = username, password
        return AuthResult(True, sid)

    def open_shell(self, sid: str, *, tty: str = "pts/0", echo: bool = False,
                   crlf: bool = False) -> "ShellSession":
        conn = self._conn(sid)
        if conn.account is None:
            raise SensorError(f"{sid} is not authenticated")
        if conn.shell is not None:
            raise SensorError(f"{sid} already has a shell")
        conn.shell = ShellSession(self, conn, tty, echo=echo, crlf=crlf)
        return conn.shell

    def disconnect(self, sid: str, ts: datetime | None = None, reason: str | None = None) -> None:
        conn = self._conns.get(sid)
        if conn is None or conn.closed:
            return
        if conn.shell is not None:
            conn.shell._teardown()
        conn.closed = True
        self.log.event(self._ts(ts), sid, EventKind.DISCONNECT, ip=conn.ip, reason=reason)
        with self._lock:
            del self._conns[sid]

    @property
    def open_connections(self) -> list[str]:
        with self._lock:
            return sorted(self._conns)

    # --- sandboxes ----------------------------------------------------------

    def sandbox(self, account: bytes) -> tuple[SandboxState, threading.Lock]:
        with self._lock:
            st = self._sandboxes.get(account)
            if st is None:
                st = new_sandbox(b2s(account), self.shell_config, self.policy.usernames)
                self._sandboxes[account] = st
                self._sandbox_locks[account] = threading.Lock()
            return st, self._sandbox_locks[account]

    # --- egress -----------------------------------------------------------

    def egress_check(self, sid: str, dst: str, port: int, proto: str, ts: datetime | None = None) -> str:
        ts = self._ts(ts)
        verdict = self.egress.verdict(dst, port, proto, ts)
        self.log.event(ts, sid, EventKind.EGRESS, dst=dst, port=port, proto=proto, verdict=verdict,
                       bait=self.egress.is_bait(dst))
        return verdict

    def change_password(self, account: bytes, old: bytes, new: bytes, ts: datetime) -> bool:
        ok = self.policy.change_password(account, old, new, ts)
        if ok and self.state_path:
            self.policy.save_state(self.state_path)
        return ok


class ShellSession:
    """Bridges one authenticated channel to the account's sandbox.

    ``feed`` logs the delivered chunk as exactly one TtyRead and returns the
    bytes to send back, which are logged as exactly one TtyWrite.
    """

    def __init__(self, sensor: Sensor, conn: _Conn, tty: str, *, echo: bool, crlf: bool):
        self.sensor = sensor
        self.conn = conn
        self.tty = tty
        self.echo = echo
        self.crlf = crlf
        self.assembler = LineAssembler()
        self.pending: PendingInput | None = None
        self.closed = False
        self.started = False
        self.proc = None

    @property
    def sid(self) -> str:
        return self.conn.sid

    def _write(self, data: bytes, ts: datetime) -> bytes:
        if self.crlf:
            data = data.replace(b"\r\n", b"\n").replace(b"\n", b"\r\n")
        if data:
            self.sensor.log.event(ts, self.sid, EventKind.TTY_WRITE, tty=self.tty, data=data)
        return data

    def start(self, ts: datetime | None = None) -> bytes:
        """Login banner (motd) and first prompt."""
        ts = self.sensor._ts(ts)
        state, lock = self.sensor.sandbox(self.conn.account)
        with lock:
            self.proc = login(state, self.tty)
            banner = state.config.motd_text.encode() + state.prompt()
        self.started = True
        return self._write(banner, ts)

    def feed(self, data: bytes, ts: datetime | None = None) -> bytes:
        if self.closed:
            raise SensorError(f"{self.sid}: shell closed")
        if not data:
            return b""
        ts = self.sensor._ts(ts)
        if not self.started:
            self.start(ts)
        self.sensor.log.event(ts, self.sid, EventKind.TTY_READ, tty=self.tty, data=data)
        out = bytearray()
        if self.echo and (self.pending is None or self.pending.echo):
            out += _echo(data)
        state, lock = self.sensor.sandbox(self.conn.account)
        try:
            for line in self.assembler.feed(data):
                out += self._dispatch(line.text, state, lock, ts)
                if self.closed:
                    break
        except Exception as exc:  # fail closed: never let the emulation take the sensor down
            log.exception("shellbox failure in %s", self.sid)
            self.sensor.log.event(ts, self.sid, EventKind.INCIDENT, reason=f"shellbox: {type(exc).__name__}")
            self.closed = True
            out += b"\nConnection closed.\n"
        reply = self._write(bytes(out), ts)
        if self.closed:
            self.sensor.disconnect(self.sid, ts, reason="logout")
        return reply

    def _dispatch(self, line: bytes, state: SandboxState, lock: threading.Lock, ts: datetime) -> bytes:
        sensor, sid, account = self.sensor, self.sid, self.conn.account

        def on_exec(rec: ExecRecord) -> None:
            sensor.log.event(ts, sid, EventKind.EXEC, path=rec.path, argv=rec.argv, cwd=rec.cwd,
                             uid=rec.uid, image=rec.image)

        ctx = ExecContext(
            ts=ts, tty=self.tty, source_ip=self.conn.ip, on_exec=on_exec,
            egress=lambda dst, port, proto: sensor.egress_check(sid, dst, port, proto, ts),
            verify_password=lambda pw: sensor.policy.check(account, pw, ts),
            change_password=lambda old, new: sensor.change_password(account, old, new, ts),
        )
        with lock:
            if self.pending is not None:
                handler, self.pending = self.pending.handler, None
                res = handler(line)
            else:
                res = execute(line, state, ctx)
            self.pending = res.pending
            out = res.output
            if res.logout:
                self.closed = True
            elif res.pending is None:
                out += state.prompt()
        return out

    def _teardown(self) -> None:
        self.closed = True
        if self.proc is not None:
            state, lock = self.sensor.sandbox(self.conn.account)
            with lock:
                logout(state, self.proc)
            self.proc = None


def _echo(data: bytes) -> bytes:
    out = bytearray()
    for b in data:
        if b in BACKSPACES:
            out += b"\b \b"
        elif b == 0x0D:
            out += b"\r\n"
        elif b == 0x0A:
            if not out.endswith(b"\r\n"):
                out += b"\r\n"
        else:
            out.append(b)
    return bytes(out)
