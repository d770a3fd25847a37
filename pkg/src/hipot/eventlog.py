"""
hipot.eventlog

Canonical event model and the append-only ``hipot-log v1`` file format.

Every line is one JSON object. Byte payloads from the terminal are hex
encoded; usernames, passwords and argv strings are stored as text, with
undecodable bytes carried through ``surrogateescape`` (JSON escapes the lone
surrogates, so any byte string survives a round trip).
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import IO, Callable, Iterable, Iterator, Union

from . import LOG_VERSION

UTC = timezone.utc


class EventKind(str, Enum):
    CONNECT = "connect"
    AUTH = "auth"
    TTY_READ = "tty_read"
    TTY_WRITE = "tty_write"
    EXEC = "exec"
    EGRESS = "egress"
    DISCONNECT = "disconnect"
    INCIDENT = "incident"


class LogError(Exception):
    pass


class EncodeError(LogError):
    pass


class LogParseError(LogError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


class PartialTail(LogParseError):
    """The final line of a log was cut short (sensor killed mid-write)."""


# --- timestamps -----------------------------------------------------------

def utcnow() -> datetime:
    return truncate_ms(datetime.now(UTC))


def truncate_ms(ts: datetime) -> datetime:
    return ts.replace(microsecond=ts.microsecond - ts.microsecond % 1000)


def format_ts(ts: datetime) -> str:
    if ts.tzinfo is None:
        raise EncodeError("naive timestamp")
    ts = ts.astimezone(UTC)
    if ts.microsecond % 1000:
        raise EncodeError(f"timestamp {ts.isoformat()} has sub-millisecond precision")
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def parse_ts(text: str) -> datetime:
    """Parse an RFC-3339 UTC timestamp (``Z`` suffix, optional milliseconds)."""
    if not isinstance(text, str) or not text.endswith("Z"):
        raise ValueError(f"bad timestamp {text!r}")
    body = text[:-1]
    fmt = "%Y-%m-%dT%H:%M:%S.%f" if "." in body else "%Y-%m-%dT%H:%M:%S"
    ts = datetime.strptime(body, fmt).replace(tzinfo=UTC)
    if ts.microsecond % 1000:
        raise ValueError(f"timestamp {text!r} finer than milliseconds")
    return ts


def b2s(raw: bytes) -> str:
    return raw.decode("utf-8", "surrogateescape")


def s2b(text: str) -> bytes:
    return text.encode("utf-8", "surrogateescape")


# --- records --------------------------------------------------------------

@dataclass(frozen=True)
class AuthAttempt:
    seq: int
    ts: datetime
    source_ip: str
    username: bytes
    password: bytes
    success: bool
    session_id: str | None = None

    kind = EventKind.AUTH


@dataclass(frozen=True)
class SessionEvent:
    """One captured event. Only the fields relevant to ``kind`` are set."""

    seq: int
    ts: datetime
    session_id: str
    kind: EventKind
    ip: str | None = None
    tty: str | None = None
    data: bytes | None = None
    path: str | None = None
    argv: tuple[str, ...] | None = None
    cwd: str | None = None
    uid: int | None = None
    image: str | None = None
    dst: str | None = None
    port: int | None = None
    proto: str | None = None
    verdict: str | None = None
    bait: bool = False
    reason: str | None = None


Record = Union[AuthAttempt, SessionEvent]

_REQUIRED = {
    EventKind.CONNECT: ("ip",),
    EventKind.DISCONNECT: ("ip",),
    EventKind.TTY_READ: ("tty", "data"),
    EventKind.TTY_WRITE: ("tty", "data"),
    EventKind.EXEC: ("path", "argv"),
    EventKind.EGRESS: ("dst", "port", "proto", "verdict"),
    EventKind.INCIDENT: ("reason",),
}


def _check(e: Record) -> None:
    if not isinstance(e.seq, int) or isinstance(e.seq, bool) or e.seq < 0:
        raise EncodeError(f"bad seq {e.seq!r}")
    if isinstance(e, AuthAttempt):
        if not isinstance(e.username, bytes) or not isinstance(e.password, bytes):
            raise EncodeError("username/password must be bytes")
        return
    if not isinstance(e.kind, EventKind) or e.kind is EventKind.AUTH:
        raise EncodeError(f"bad event kind {e.kind!r}")
    if not e.session_id:
        raise EncodeError("session event without session id")
    for name in _REQUIRED[e.kind]:
        if getattr(e, name) is None:
            raise EncodeError(f"{e.kind.value} event missing {name}")
    if e.kind is EventKind.TTY_READ and not e.data:
        raise EncodeError("empty tty_read payload")
    if e.data is not None and not isinstance(e.data, bytes):
        raise EncodeError("tty payload must be bytes")


def encode_event(e: Record) -> bytes:
    """Serialise one record to a single newline-terminated log line."""
    _check(e)
    obj: dict = {"v": LOG_VERSION, "seq": e.seq, "ts": format_ts(e.ts), "kind": e.kind.value}
    if e.session_id is not None:
        obj["sid"] = e.session_id
    if isinstance(e, AuthAttempt):
        obj.update(ip=e.source_ip, user=b2s(e.username), **{"pass": b2s(e.password)}, ok=e.success)
    elif e.kind in (EventKind.TTY_READ, EventKind.TTY_WRITE):
        obj.update(tty=e.tty, data_hex=e.data.hex())
    elif e.kind is EventKind.EXEC:
        obj.update(path=e.path, argv=list(e.argv))
        for key in ("cwd", "uid", "image"):
            if getattr(e, key) is not None:
                obj[key] = getattr(e, key)
    elif e.kind is EventKind.EGRESS:
        obj.update(dst=e.dst, port=e.port, proto=e.proto, verdict=e.verdict)
        if e.bait:
            obj["bait"] = True
    elif e.kind in (EventKind.CONNECT, EventKind.DISCONNECT):
        obj["ip"] = e.ip
        if e.reason is not None:
            obj["reason"] = e.reason
    elif e.kind is EventKind.INCIDENT:
        obj["reason"] = e.reason
    try:
        return json.dumps(obj, ensure_ascii=True, separators=(",", ":")).encode("ascii") + b"\n"
    except (TypeError, ValueError) as exc:
        raise EncodeError(str(exc)) from exc


def _field(obj: dict, key: str, typ, lineno):
    if key not in obj:
        raise LogParseError(f"missing key {key!r}", lineno)
    val = obj[key]
    if typ is int and isinstance(val, bool):
        raise LogParseError(f"key {key!r} has wrong type", lineno)
    if not isinstance(val, typ):
        raise LogParseError(f"key {key!r} has wrong type", lineno)
    return val


def _opt(obj: dict, key: str, typ, lineno):
    if obj.get(key) is None:
        return None
    return _field(obj, key, typ, lineno)


def decode_event(line: bytes | str, lineno: int | None = None, *, final: bool = False) -> Record:
    """Parse one log line.

    ``final`` marks the last line of a file that lacked its newline; a JSON
    syntax failure there raises :class:`PartialTail` instead of a plain
    parse error.
    """
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise LogParseError(f"not UTF-8: {exc}", lineno) from exc
    line = line.rstrip("\n")
    if not line.strip():
        raise LogParseError("empty line", lineno)
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        if final:
            raise PartialTail(f"truncated record: {exc}", lineno) from exc
        raise LogParseError(f"invalid JSON: {exc}", lineno) from exc
    if not isinstance(obj, dict):
        raise LogParseError("record is not an object", lineno)
    if obj.get("v") != LOG_VERSION:
        raise LogParseError(f"unsupported version {obj.get('v')!r}", lineno)
    seq = _field(obj, "seq", int, lineno)
    try:
        ts = parse_ts(obj.get("ts"))
    except (ValueError, TypeError) as exc:
        raise LogParseError(str(exc), lineno) from exc
    tag = _field(obj, "kind", str, lineno)
    try:
        kind = EventKind(tag)
    except ValueError:
        raise LogParseError(f"unknown kind {tag!r}", lineno) from None
    sid = _opt(obj, "sid", str, lineno)

    if kind is EventKind.AUTH:
        return AuthAttempt(
            seq=seq, ts=ts, session_id=sid,
            source_ip=_field(obj, "ip", str, lineno),
            username=s2b(_field(obj, "user", str, lineno)),
            password=s2b(_field(obj, "pass", str, lineno)),
            success=_field(obj, "ok", bool, lineno),
        )
    if sid is None:
        raise LogParseError(f"{tag} record without sid", lineno)
    kw: dict = {}
    if kind in (EventKind.TTY_READ, EventKind.TTY_WRITE):
        kw["tty"] = _field(obj, "tty", str, lineno)
        try:
            kw["data"] = bytes.fromhex(_field(obj, "data_hex", str, lineno))
        except ValueError as exc:
            raise LogParseError(f"bad data_hex: {exc}", lineno) from exc
        if kind is EventKind.TTY_READ and not kw["data"]:
            raise LogParseError("empty tty_read payload", lineno)
    elif kind is EventKind.EXEC:
        kw["path"] = _field(obj, "path", str, lineno)
        argv = _field(obj, "argv", list, lineno)
        if not all(isinstance(a, str) for a in argv):
            raise LogParseError("argv must be a list of strings", lineno)
        kw["argv"] = tuple(argv)
        kw["cwd"] = _opt(obj, "cwd", str, lineno)
        kw["uid"] = _opt(obj, "uid", int, lineno)
        kw["image"] = _opt(obj, "image", str, lineno)
    elif kind is EventKind.EGRESS:
        kw["dst"] = _field(obj, "dst", str, lineno)
        kw["port"] = _field(obj, "port", int, lineno)
        kw["proto"] = _field(obj, "proto", str, lineno)
        kw["verdict"] = _field(obj, "verdict", str, lineno)
        kw["bait"] = bool(_opt(obj, "bait", bool, lineno))
    elif kind in (EventKind.CONNECT, EventKind.DISCONNECT):
        kw["ip"] = _field(obj, "ip", str, lineno)
        kw["reason"] = _opt(obj, "reason", str, lineno)
    elif kind is EventKind.INCIDENT:
        kw["reason"] = _field(obj, "reason", str, lineno)
    return SessionEvent(seq=seq, ts=ts, session_id=sid, kind=kind, **kw)


# --- reading --------------------------------------------------------------

@dataclass
class LoadedLog:
    records: list[Record]
    partial_tail: bytes | None = None


def iter_log(data: bytes) -> Iterator[Record]:
    """Decode a whole log image. Raises PartialTail only for a cut final line."""
    lines = data.split(b"\n")
    tail = lines.pop()  # b"" when the log ends with a newline
    for n, raw in enumerate(lines, start=1):
        yield decode_event(raw, n)
    if tail:
        yield decode_event(tail, len(lines) + 1, final=True)


def load_log(path: str | os.PathLike) -> LoadedLog:
    """Read a log file, tolerating a truncated final record."""
    data = Path(path).read_bytes()
    out = LoadedLog(records=[])
    try:
        for rec in iter_log(data):
            out.records.append(rec)
    except PartialTail:
        out.partial_tail = data.rsplit(b"\n", 1)[-1]
    return out


def load_records(path: str | os.PathLike) -> list[Record]:
    return load_log(path).records


# --- writing --------------------------------------------------------------

class LogWriter:
    """Single serialiser for all producers: assigns seq and appends one line per record.

    ``sink`` is a path (opened in append mode), a binary file object, or None
    for an in-memory log (records kept on ``self.records``).
    """

    def __init__(self, sink: str | os.PathLike | IO[bytes] | None = None, *, keep: bool | None = None,
                 listeners: Iterable[Callable[[Record], None]] = ()):
        self._lock = threading.Lock()
        self._fh: IO[bytes] | None = None
        self._owns = False
        self._next_seq = 0
        if sink is None:
            keep = True if keep is None else keep
        elif isinstance(sink, (str, os.PathLike)):
            path = Path(sink)
            if path.exists() and path.stat().st_size:
                self._next_seq = _last_seq(path) + 1
            self._fh = open(path, "ab")
            self._owns = True
        else:
            self._fh = sink
        self.records: list[Record] | None = [] if keep else None
        self._listeners = list(listeners)

    def add_listener(self, fn: Callable[[Record], None]) -> None:
        with self._lock:
            self._listeners.append(fn)

    def auth(self, ts: datetime, ip: str, username: bytes, password: bytes, success: bool,
             session_id: str | None = None) -> AuthAttempt:
        return self._append(lambda seq: AuthAttempt(seq, ts, ip, username, password, success, session_id))

    def event(self, ts: datetime, session_id: str, kind: EventKind, **payload) -> SessionEvent:
        return self._append(lambda seq: SessionEvent(seq=seq, ts=ts, session_id=session_id, kind=kind, **payload))

    def _append(self, build) -> Record:
        with self._lock:
            rec = build(self._next_seq)
            line = encode_event(rec)
            self._next_seq += 1
            if self._fh is not None:
                self._fh.write(line)
                self._fh.flush()
            if self.records is not None:
                self.records.append(rec)
            listeners = list(self._listeners)
        for fn in listeners:
            fn(rec)
        return rec

    def close(self) -> None:
        with self._lock:
            if self._owns and self._fh is not None:
                self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _last_seq(path: Path) -> int:
    with open(path, "rb") as fh:
        fh.seek(0, os.SEEK_END)
        size = fh.tell()
        fh.seek(max(0, size - 65536))
        chunk = fh.read()
    for raw in reversed(chunk.split(b"\n")):
        if not raw.strip():
            continue
        try:
            return decode_event(raw).seq
        except LogParseError:
            continue
    return -1


def write_records(records: Iterable[Record], fh: IO[bytes]) -> int:
    n = 0
    for rec in records:
        fh.write(encode_event(rec))
        n += 1
    return n


# --- sessionization -------------------------------------------------------

@dataclass
class Session:
    session_id: str
    source_ip: str
    start_ts: datetime
    end_ts: datetime
    account: bytes | None = None
    password: bytes | None = None
    events: list[Record] = field(default_factory=list)

    @property
    def authenticated(self) -> bool:
        return self.account is not None

    @property
    def execs(self) -> list[SessionEvent]:
        return [e for e in self.events if e.kind is EventKind.EXEC]

    @property
    def is_intrusion(self) -> bool:
        return self.authenticated and any(e.kind is EventKind.EXEC for e in self.events)

    @property
    def login_ts(self) -> datetime | None:
        for e in self.events:
            if isinstance(e, AuthAttempt) and e.success:
                return e.ts
        return None

    def tty_reads(self) -> list[bytes]:
        return [e.data for e in self.events if e.kind is EventKind.TTY_READ]

    @property
    def duration(self) -> timedelta:
        return self.end_ts - self.start_ts


@dataclass
class SessionizedLog:
    sessions: list[Session]
    failed: list[AuthAttempt]
    orphans: list[Record]

    @property
    def attempts(self) -> list[AuthAttempt]:
        ok = [e for s in self.sessions for e in s.events if isinstance(e, AuthAttempt)]
        return sorted(self.failed + ok, key=lambda a: a.seq)

    def __iter__(self):
        # allows ``sessions, failed = sessionize(...)`` style unpacking of the core pair
        return iter((self.sessions, self.failed))


def sessionize(records: Iterable[Record]) -> SessionizedLog:
    """Group a flat record stream into per-connection sessions.

    Failed auth attempts are returned separately. Anything carrying a session
    id that was never opened by a ``connect`` is quarantined in ``orphans``.
    """
    by_sid: dict[str, Session] = {}
    failed: list[AuthAttempt] = []
    orphans: list[Record] = []
    for rec in sorted(records, key=lambda r: r.seq):
        if isinstance(rec, AuthAttempt) and not rec.success:
            failed.append(rec)
            continue
        sid = rec.session_id
        sess = by_sid.get(sid) if sid is not None else None
        if sess is None:
            if rec.kind is EventKind.CONNECT and sid is not None:
                sess = by_sid[sid] = Session(sid, rec.ip, rec.ts, rec.ts)
            else:
                orphans.append(rec)
                continue
        elif rec.kind is EventKind.CONNECT:
            # duplicate connect for a live id
            orphans.append(rec)
            continue
        sess.events.append(rec)
        if rec.ts > sess.end_ts:
            sess.end_ts = rec.ts
        if isinstance(rec, AuthAttempt) and sess.account is None:
            sess.account = rec.username
            sess.password = rec.password
    sessions = sorted(by_sid.values(), key=lambda s: (s.start_ts, s.events[0].seq))
    return SessionizedLog(sessions, failed, orphans)
