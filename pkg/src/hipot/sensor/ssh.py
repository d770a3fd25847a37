"""Real ssh transport on top of paramiko (optional dependency, ``pip install .[ssh]``)."""
from __future__ import annotations

import logging
import socket
import threading

from .core import Sensor, SensorError

log = logging.getLogger(__name__)

try:
    import paramiko
except ImportError:  # pragma: no cover - exercised only without the extra
    paramiko = None


def _require():
    if paramiko is None:
        raise SensorError("ssh mode needs paramiko (pip install 'artifact[ssh]')")


def load_host_key(path: str | None):
    _require()
    if path:
        return paramiko.RSAKey.from_private_key_file(path)
    log.warning("no host key given; generating an ephemeral RSA key")
    return paramiko.RSAKey.generate(2048)


if paramiko is not None:

    class _Server(paramiko.ServerInterface):
        def __init__(self, sensor: Sensor, sid: str):
            self.sensor = sensor
            self.sid = sid
            self.granted = False
            self.shell_event = threading.Event()

        def get_allowed_auths(self, username):
            return "password"

        def check_auth_password(self, username, password):
            res = self.sensor.authenticate(self.sid, username.encode("utf-8", "surrogateescape"),
                                           password.encode("utf-8", "surrogateescape"))
            if res.granted:
                self.granted = True
                return paramiko.AUTH_SUCCESSFUL
            return paramiko.AUTH_FAILED

        def check_channel_request(self, kind, chanid):
            if kind == "session" and self.granted:
                return paramiko.OPEN_SUCCEEDED
            return paramiko.OPEN_FAILED_ADMINISTRATIVELY_PROHIBITED

        def check_channel_pty_request(self, *args):
            return True

        def check_channel_shell_request(self, channel):
            self.shell_event.set()
            return True


def handle_ssh_client(sock: socket.socket, addr, sensor: Sensor, host_key, *, timeout: float = 600.0) -> None:
    _require()
    sid = sensor.connect(addr[0])
    transport = paramiko.Transport(sock)
    transport.add_server_key(host_key)
    server = _Server(sensor, sid)
    try:
        transport.start_server(server=server)
        chan = transport.accept(timeout)
        if chan is None or not server.shell_event.wait(30):
            return
        shell = sensor.open_shell(sid, echo=True, crlf=True)
        chan.sendall(shell.start())
        chan.settimeout(timeout)
        while not shell.closed:
            data = chan.recv(4096)
            if not data:
                break
            reply = shell.feed(data)
            if reply:
                chan.sendall(reply)
        chan.close()
    except (paramiko.SSHException, EOFError, OSError) as exc:
        log.info("ssh channel failure from %s: %s", addr[0], exc)
    finally:
        sensor.disconnect(sid)
        transport.close()


def serve_ssh(address: tuple[str, int], sensor: Sensor, host_key, stop: threading.Event | None = None) -> None:
    _require()
    stop = stop or threading.Event()
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as srv:
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind(address)
        srv.listen(64)
        srv.settimeout(0.5)
        while not stop.is_set():
            try:
                sock, addr = srv.accept()
            except socket.timeout:
                continue
            threading.Thread(target=handle_ssh_client, args=(sock, addr, sensor, host_key),
                             daemon=True).start()
