"""Sandbox state: one per account, persisting across that account's sessions."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

from ..eventlog import UTC
from .fixtures import Catalog, default_catalog
from .vfs import VFS, Identity, Node

DEFAULT_CPUINFO = """\
processor\t: 0
vendor_id\t: GenuineIntel
cpu family\t: 15
model\t\t: 2
model name\t: Intel(R) Pentium(R) 4 CPU 2.80GHz
stepping\t: 9
cpu MHz\t\t: 2793.254
cache size\t: 512 KB
fpu\t\t: yes
flags\t\t: fpu vme de pse tsc msr pae mce cx8 apic sep mtrr pge mca cmov pat pse36 clflush mmx fxsr sse sse2
bogomips\t: 5586.50
"""

# (command name, installed path); "builtin:" entries never touch the vfs
BINARIES = {
    "ls": "/bin/ls", "cat": "/bin/cat", "ps": "/bin/ps", "uname": "/bin/uname",
    "tar": "/bin/tar", "gzip": "/bin/gzip", "gunzip": "/bin/gunzip", "chmod": "/bin/chmod",
    "rm": "/bin/rm", "mv": "/bin/mv", "mkdir": "/bin/mkdir", "touch": "/bin/touch",
    "grep": "/bin/grep", "dmesg": "/bin/dmesg", "hostname": "/bin/hostname", "ping": "/bin/ping",
    "mail": "/bin/mail", "w": "/usr/bin/w", "id": "/usr/bin/id", "whoami": "/usr/bin/whoami",
    "uptime": "/usr/bin/uptime", "passwd": "/usr/bin/passwd", "wget": "/usr/bin/wget",
    "ssh": "/usr/bin/ssh", "inband-get": "/usr/libexec/inband-get", "lspci": "/sbin/lspci",
    "sendmail": "/usr/sbin/sendmail",
}
BUILTINS = ("cd", "pwd", "kill", "unset", "export", "history", "echo", "exit", "logout")


@dataclass
class ShellConfig:
    hostname: str = "hp1"
    kernel_release: str = "2.6.11-1.1369_FC4"
    kernel_build: str = "#1 Thu Jun 2 22:55:56 EDT 2005"
    machine: str = "i686"
    cpuinfo: str = DEFAULT_CPUINFO
    bait_address: str = "10.0.0.23"
    motd: str | None = None
    boot_ts: datetime = datetime(2006, 1, 1, tzinfo=UTC)
    catalog: Catalog = field(default_factory=default_catalog)

    @property
    def uname_a(self) -> str:
        m = self.machine
        return f"Linux {self.hostname} {self.kernel_release} {self.kernel_build} {m} {m} i386 GNU/Linux"

    @property
    def motd_text(self) -> str:
        if self.motd is not None:
            return self.motd
        return f"In order to use the software XXX, please connect to {self.bait_address}\n"


@dataclass
class Proc:
    pid: int
    user: str
    cmd: str
    tty: str = "?"


@dataclass
class SandboxState:
    account: str
    account_uid: int
    config: ShellConfig
    vfs: VFS
    cwd: str = "/"
    env: dict[str, str] = field(default_factory=dict)
    history: list[str] = field(default_factory=list)
    procs: dict[int, Proc] = field(default_factory=dict)
    uid: int = 1000
    partial_root: bool = False
    next_pid: int = 3000

    @property
    def home(self) -> str:
        return f"/home/{self.account}"

    @property
    def history_path(self) -> str:
        return f"{self.home}/.bash_history"

    @property
    def identity(self) -> Identity:
        if self.uid == 0 and not self.partial_root:
            return Identity("root", True)
        return Identity(self.account, False)

    @property
    def shown_user(self) -> str:
        return "root" if self.uid == 0 else self.account

    @property
    def history_enabled(self) -> bool:
        hf = self.env.get("HISTFILE")
        return bool(hf) and hf != "/dev/null" and self.env.get("HISTSIZE") != "0"

    def spawn(self, user: str, cmd: str, tty: str = "?") -> Proc:
        pid = self.next_pid
        self.next_pid += 1
        proc = self.procs[pid] = Proc(pid, user, cmd, tty)
        return proc

    def prompt(self) -> bytes:
        d = "~" if self.cwd == self.home else (self.cwd.rsplit("/", 1)[-1] or "/")
        sign = "#" if self.uid == 0 else "$"
        return f"[{self.shown_user}@{self.config.hostname} {d}]{sign} ".encode()


def new_sandbox(account: str, config: ShellConfig, accounts: list[str] = ()) -> SandboxState:
    """Fresh sandbox for ``account``; ``accounts`` populates /etc/passwd."""
    names = sorted((set(accounts) | {account}) - {"root"})
    uids = {name: 500 + i for i, name in enumerate(names)}
    uid = 0 if account == "root" else uids[account]
    fs = VFS()
    for d, mode in (("/bin", 0o755), ("/sbin", 0o755), ("/usr", 0o755), ("/usr/bin", 0o755),
                    ("/usr/sbin", 0o755), ("/usr/libexec", 0o755), ("/etc", 0o755), ("/proc", 0o555),
                    ("/home", 0o755), ("/root", 0o750), ("/var", 0o755), ("/var/log", 0o755),
                    ("/dev", 0o755), ("/tmp", 0o1777), ("/var/tmp", 0o1777), ("/dev/shm", 0o1777)):
        fs.nodes[d] = Node(True, "root", mode)
    for path in BINARIES.values():
        fs.nodes[path] = Node(False, "root", 0o755, size=24576)
    passwd = "root:x:0:0:root:/root:/bin/bash\nbin:x:1:1:bin:/bin:/sbin/nologin\n" \
             "apache:x:48:48:Apache:/var/www:/sbin/nologin\n"
    passwd += "".join(f"{n}:x:{u}:{u}::/home/{n}:/bin/bash\n" for n, u in uids.items())
    fs.nodes["/etc/passwd"] = Node(False, "root", 0o644, passwd.encode())
    fs.nodes["/etc/shadow"] = Node(False, "root", 0o400, b"root:!!:13000:0:99999:7:::\n")
    fs.nodes["/etc/hostname"] = Node(False, "root", 0o644, (config.hostname + "\n").encode())
    fs.nodes["/etc/motd"] = Node(False, "root", 0o644, config.motd_text.encode())
    fs.nodes["/proc/cpuinfo"] = Node(False, "root", 0o444, config.cpuinfo.encode())
    fs.nodes["/proc/version"] = Node(False, "root", 0o444,
                                     f"Linux version {config.kernel_release} (gcc version 4.0.0) "
                                     f"{config.kernel_build}\n".encode())
    fs.nodes["/var/log/messages"] = Node(False, "root", 0o600, b"")
    for n in names:
        fs.nodes[f"/home/{n}"] = Node(True, n, 0o755)
    state = SandboxState(account=account, account_uid=uid, config=config, vfs=fs, uid=uid)
    for pid, user, cmd in ((1, "root", "init [3]"), (1450, "root", "/usr/sbin/sshd"),
                           (1502, "root", "crond"), (1611, "apache", "/usr/sbin/httpd"),
                           (1612, "apache", "/usr/sbin/httpd")):
        state.procs[pid] = Proc(pid, user, cmd)
    _reset(state)
    return state


def login(state: SandboxState, tty: str = "pts/0") -> Proc:
    """Start a login shell: fresh environment and cwd, uid back to the account's."""
    _reset(state)
    return state.spawn(state.account, "-bash", tty)


def _reset(state: SandboxState) -> None:
    state.uid = state.account_uid
    state.partial_root = False
    state.cwd = state.home if state.vfs.isdir(state.home) else "/"
    state.env = {
        "HOME": state.home, "USER": state.account, "LOGNAME": state.account, "SHELL": "/bin/bash",
        "PATH": "/usr/local/bin:/bin:/usr/bin", "HISTFILE": state.history_path, "HISTSIZE": "1000",
        "TERM": "xterm",
    }


def logout(state: SandboxState, proc: Proc | None) -> None:
    if proc is not None:
        state.procs.pop(proc.pid, None)
