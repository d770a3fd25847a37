"""``--plain`` line protocol, for deterministic integration tests.

Server greets with ``HIPOT-PLAIN 1``. Client lines::

    FROM <ip>        claim a source address   (needs trust_client_meta)
    TS <rfc3339>     set the clock for what follows   (needs trust_client_meta)
    HELLO            -> OK (just opens the connection record)
    USER <name>      username for the next PASS
    PASS <password>  -> OK <sid> | DENIED
    SHELL            -> OUT <hex>... ACK    (login banner)
    IN <hex>         raw tty bytes -> OUT <hex>... then ACK, or CLOSED after logout
    TXT <text>       same as IN with the text plus LF
    BYE              -> BYE, connection closed

The Connect event is logged on the first command that is not FROM/TS, so a
client may establish its metadata first.
"""
from __future__ import annotations

import logging
import socketserver
import threading
from datetime import datetime

from ..eventlog import parse_ts, truncate_ms
from .core import Sensor, SensorError, ShellSession

log = logging.getLogger(__name__)

GREETING = b"HIPOT-PLAIN 1\n"


class PlainHandler(socketserver.StreamRequestHandler):
    server: "PlainServer"

    def send(self, line: bytes) -> None:
        self.wfile.write(line + b"\n")
        self.wfile.flush()

    def handle(self) -> None:
        sensor = self.server.sensor
        trust = self.server.trust_client_meta
        ip = self.client_address[0]
        ts: datetime | None = None
        sid: str | None = None
        user: bytes | None = None
        shell: ShellSession | None = None
        self.send(GREETING.rstrip(b"\n"))
        try:
            while True:
                raw = self.rfile.readline()
                if not raw:
                    break
                line = raw.rstrip(b"\r\n")
                verb, _, arg = line.partition(b" ")
                if verb in (b"FROM", b"TS"):
                    if not trust:
                        self.send(b"ERR client metadata not trusted")
                        continue
                    if verb == b"FROM":
                        if sid is not None:
                            self.send(b"ERR FROM after connect")
                            continue
                        ip = arg.decode("ascii", "replace")
                    else:
                        try:
                            ts = truncate_ms(parse_ts(arg.decode("ascii")))
                        except (ValueError, UnicodeDecodeError):
                            self.send(b"ERR bad timestamp")
                            continue
                    self.send(b"OK")
                    continue
                now = ts if trust and ts is not None else None
                if sid is None:
                    sid = sensor.connect(ip, now)
                if verb == b"BYE":
                    self.send(b"BYE")
                    break
                if verb == b"HELLO":
                    self.send(b"OK")
                elif verb == b"USER":
                    user = arg
                    self.send(b"OK")
                elif verb == b"PASS":
                    if user is None:
                        self.send(b"ERR USER first")
                        continue
                    res = sensor.authenticate(sid, user, arg, now)
                    self.send(b"OK " + sid.encode() if res.granted else b"DENIED")
                elif verb in (b"SHELL", b"IN", b"TXT"):
                    if shell is None:
                        try:
                            shell = sensor.open_shell(sid, echo=False)
                        except SensorError as exc:
                            self.send(b"ERR " + str(exc).encode())
                            continue
                        banner = shell.start(now)
                        if verb == b"SHELL":
                            self._out(banner)
                            self.send(b"ACK")
                            continue
                    elif verb == b"SHELL":
                        self.send(b"ERR shell already open")
                        continue
                    if verb == b"IN":
                        try:
                            data = bytes.fromhex(arg.decode("ascii"))
                        except (ValueError, UnicodeDecodeError):
                            self.send(b"ERR bad hex")
                            continue
                    else:
                        data = arg + b"\n"
                    if not data:
                        self.send(b"ERR empty input")
                        continue
                    self._out(shell.feed(data, now))
                    if shell.closed:
                        self.send(b"CLOSED")
                        sid = None
                        return
                    self.send(b"ACK")
                else:
                    self.send(b"ERR unknown command")
        except (ConnectionError, OSError) as exc:
            log.info("channel failure from %s: %s", ip, exc)
        finally:
            if sid is not None:
                sensor.disconnect(sid, ts if trust else None)

    def _out(self, data: bytes) -> None:
        for i in range(0, len(data), 4096):
            self.send(b"OUT " + data[i:i + 4096].hex().encode())


class PlainServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], sensor: Sensor, *, trust_client_meta: bool = False):
        super().__init__(address, PlainHandler)
        self.sensor = sensor
        self.trust_client_meta = trust_client_meta

    def serve_in_thread(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="hipot-plain", daemon=True)
        t.start()
        return t
