"""Command-line execution against a SandboxState.

Emulation is behavioural: each command produces just enough output and
state change for the activity it represents to be observable in the log.
``|``, ``;``, ``&``, ``&&`` and ``||`` sequence commands; there is no job control.
"""
from __future__ import annotations

import ipaddress
import posixpath
import re
import shlex
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable
from urllib.parse import urlsplit

from ..eventlog import UTC, b2s, s2b
from .fixtures import Fixture
from .state import BINARIES, BUILTINS, SandboxState
from .vfs import ENOENT, EPERM, FsError, VFS


@dataclass(frozen=True)
class ExecRecord:
    path: str
    argv: tuple[str, ...]
    cwd: str
    uid: int
    image: str | None = None


def _deny(dst: str, port: int, proto: str) -> str:
    return "deny"


@dataclass
class ExecContext:
    """What the shell may ask of the outside world; the sensor supplies real hooks."""

    ts: datetime = datetime(2006, 1, 1, tzinfo=UTC)
    tty: str = "pts/0"
    source_ip: str = "0.0.0.0"
    on_exec: Callable[[ExecRecord], None] | None = None
    egress: Callable[[str, int, str], str] = _deny
    verify_password: Callable[[bytes], bool] = lambda pw: False
    change_password: Callable[[bytes, bytes], bool] = lambda old, new: False


@dataclass
class PendingInput:
    """A command waiting for another input line (e.g. a password prompt)."""

    handler: Callable[[bytes], "ExecResult"]
    echo: bool = False


@dataclass
class ExecResult:
    output: bytes = b""
    execs: list[ExecRecord] = field(default_factory=list)
    pending: PendingInput | None = None
    logout: bool = False
    status: int = 0


@dataclass
class _Out:
    status: int = 0
    stdout: bytes = b""
    stderr: bytes = b""
    pending: PendingInput | None = None
    logout: bool = False


class _Run:
    """Per-line execution scratchpad."""

    def __init__(self, state: SandboxState, ctx: ExecContext):
        self.state = state
        self.ctx = ctx
        self.execs: list[ExecRecord] = []

    @property
    def vfs(self) -> VFS:
        return self.state.vfs

    def path(self, p: str) -> str:
        return VFS.resolve(self.state.cwd, p, self.state.home)

    def emit(self, path: str, argv: list[str], image: str | None = None) -> None:
        rec = ExecRecord(path, tuple(argv), self.state.cwd, self.state.uid, image)
        self.execs.append(rec)
        if self.ctx.on_exec is not None:
            self.ctx.on_exec(rec)


# --- parsing ----------------------------------------------------------------

class ParseError(ValueError):
    pass


_VAR = re.compile(r"\$(\w+|\{\w+\})")
SEPARATORS = (";", "&", "&&", "||")


@dataclass
class Stage:
    argv: list[str] = field(default_factory=list)
    stdout: tuple[str, str] | None = None  # (">" or ">>", target)
    stdin: str | None = None
    quiet_stderr: bool = False


def parse_line(line: str, env: dict[str, str], home: str) -> list[tuple[str, list[Stage]]]:
    lex = shlex.shlex(line, posix=True, punctuation_chars=";&|<>")
    lex.whitespace_split = True
    lex.commenters = ""
    try:
        tokens = list(lex)
    except ValueError as exc:
        raise ParseError(str(exc)) from None

    def expand(tok: str) -> str:
        if tok == "~" or tok.startswith("~/"):
            tok = home + tok[1:]
        return _VAR.sub(lambda m: env.get(m.group(1).strip("{}"), ""), tok)

    items: list[tuple[str, list[Stage]]] = []
    connector = ";"
    pipeline = [Stage()]
    it = iter(tokens)
    for tok in it:
        if tok in SEPARATORS or tok == "|":
            if not pipeline[-1].argv:
                raise ParseError(f"syntax error near unexpected token `{tok}'")
            if tok == "|":
                pipeline.append(Stage())
                continue
            items.append((connector, pipeline))
            connector, pipeline = tok, [Stage()]
        elif tok in (">", ">>", "<", ">&", "&>"):
            target = next(it, None)
            if target is None:
                raise ParseError("syntax error near unexpected token `newline'")
            stage = pipeline[-1]
            fd = None
            if stage.argv and stage.argv[-1] in ("1", "2") and len(stage.argv) > 1:
                fd = stage.argv.pop()
            if tok == "<":
                stage.stdin = expand(target)
            elif tok == ">&":
                if fd != "2":
                    stage.stdout = (">", expand(target))
            elif fd == "2":
                stage.quiet_stderr = True
            else:
                stage.stdout = (tok if tok != "&>" else ">", expand(target))
                if tok == "&>":
                    stage.quiet_stderr = True
        else:
            pipeline[-1].argv.append(expand(tok))
    if pipeline[-1].argv:
        items.append((connector, pipeline))
    elif len(pipeline) > 1:
        raise ParseError("syntax error: unexpected end of file")
    return items


# --- entry points -------------------------------------------------------------

def execute(line: bytes, state: SandboxState, ctx: ExecContext) -> ExecResult:
    """Run one reconstructed command line. Mutates ``state`` in place."""
    text = b2s(line).strip()
    if not text:
        return ExecResult()
    if state.history_enabled:
        state.history.append(text)
        _sync_history(state)
    run = _Run(state, ctx)
    try:
        items = parse_line(text, state.env, state.home)
    except ParseError as exc:
        return ExecResult(f"-bash: {exc}\n".encode(), status=2)
    out = bytearray()
    status = 0
    for connector, pipeline in items:
        if connector == "&&" and status != 0:
            continue
        if connector == "||" and status == 0:
            continue
        res = _run_pipeline(run, pipeline)
        out += res.stdout + res.stderr
        status = res.status
        if res.pending or res.logout:
            # the rest of the line is dropped once a command takes over the tty
            return ExecResult(bytes(out), run.execs, res.pending, res.logout, status)
    return ExecResult(bytes(out), run.execs, None, False, status)


def _sync_history(state: SandboxState) -> None:
    data = "".join(h + "\n" for h in state.history).encode("utf-8", "surrogateescape")
    node = state.vfs.get(state.history_path)
    if node is None:
        if state.vfs.isdir(state.home):
            from .vfs import Node
            state.vfs.nodes[state.history_path] = Node(False, state.account, 0o600, data)
    else:
        node.data = data


def _run_pipeline(run: _Run, stages: list[Stage]) -> _Out:
    stdin = b""
    shown = _Out()
    for i, stage in enumerate(stages):
        last = i == len(stages) - 1
        res = _run_stage(run, stage, stdin)
        if not stage.quiet_stderr:
            shown.stderr += res.stderr
        if res.pending or res.logout:
            shown.stdout += res.stdout
            shown.pending, shown.logout, shown.status = res.pending, res.logout, res.status
            return shown
        if last:
            shown.stdout += res.stdout
            shown.status = res.status
        else:
            stdin = res.stdout
    return shown


def _run_stage(run: _Run, stage: Stage, stdin: bytes) -> _Out:
    st = run.state
    argv = stage.argv
    name = argv[0]
    if stage.stdin is not None:
        try:
            stdin = run.vfs.read(run.path(stage.stdin), st.identity)
        except FsError as exc:
            return _Out(1, stderr=f"-bash: {stage.stdin}: {exc.strerror}\n".encode())

    if "=" in name and re.match(r"^\w+=", name) and len(argv) == 1:
        run.emit("builtin:assign", argv)
        key, _, val = name.partition("=")
        st.env[key] = val
        res = _Out()
    elif "/" in name:
        res = _run_file(run, argv)
    elif name in BUILTINS:
        run.emit(f"builtin:{name}", argv)
        res = COMMANDS[name](run, argv, stdin)
    elif name in BINARIES:
        run.emit(BINARIES[name], argv)
        res = COMMANDS[name](run, argv, stdin)
    else:
        run.emit(name, argv)
        res = _Out(127, stderr=f"-bash: {name}: command not found\n".encode())

    if stage.stdout is not None and not res.pending:
        op, target = stage.stdout
        if target != "/dev/null":
            path = run.path(target)
            try:
                run.vfs.write(path, res.stdout, st.identity, append=op == ">>")
                if path == st.history_path and op == ">":
                    st.history.clear()
            except FsError as exc:
                return _Out(1, stderr=res.stderr + f"-bash: {target}: {exc.strerror}\n".encode())
        res.stdout = b""
    return res


# --- executing virtual files -----------------------------------------------------

def _run_file(run: _Run, argv: list[str]) -> _Out:
    st = run.state
    shown = argv[0]
    path = run.path(shown)
    node = run.vfs.get(path)
    image = node.fixture if node is not None and not node.is_dir else None
    run.emit(path, argv, image)
    if node is None:
        return _Out(127, stderr=f"-bash: {shown}: {ENOENT}\n".encode())
    if node.is_dir:
        return _Out(126, stderr=f"-bash: {shown}: is a directory\n".encode())
    if not run.vfs.can_exec(node, st.identity):
        return _Out(126, stderr=f"-bash: {shown}: Permission denied\n".encode())
    for cmd, bin_path in BINARIES.items():
        if bin_path == path:
            return COMMANDS[cmd](run, argv, b"")
    fx = st.config.catalog.get(image)
    if fx is None or fx.behavior == "archive":
        return _Out(126, stderr=f"-bash: {shown}: cannot execute binary file\n".encode())
    return run_fixture_binary(path, fx, st, run.ctx, argv)


def _expand_targets(spec: str, limit: int) -> list[str]:
    parts = spec.split(".")
    if "/" not in spec and 1 <= len(parts) <= 3 and all(p.isdigit() for p in parts):
        spec = ".".join(parts + ["0"] * (4 - len(parts))) + f"/{8 * len(parts)}"
    try:
        net = ipaddress.ip_network(spec, strict=False)
    except ValueError:
        return []
    out = []
    for host in net.hosts() if net.num_addresses > 2 else net:
        out.append(str(host))
        if len(out) >= limit:
            break
    return out


def run_fixture_binary(path: str, fx: Fixture, state: SandboxState, ctx: ExecContext,
                       argv: list[str]) -> _Out:
    """Play out a fixture's scripted behaviour. Egress goes through ``ctx.egress``."""
    name = posixpath.basename(path)
    if fx.behavior == "scan-tool":
        spec = argv[1] if len(argv) > 1 else (fx.targets or "")
        targets = _expand_targets(spec, 8)
        if not targets:
            return _Out(1, stderr=f"usage: {name} <class-b prefix>\n".encode())
        out = f"{name}: scanning {spec} port 22\n"
        open_hosts = [t for t in targets if ctx.egress(t, 22, "ssh") == "allow"]
        out += f"{name}: done, {len(targets)} probed, {len(open_hosts)} open\n"
        return _Out(0, out.encode())
    if fx.behavior == "irc-bot":
        proc = state.spawn(state.shown_user, name)
        server = fx.server or "irc.example.net"
        ctx.egress(server, fx.port or 6667, "irc")
        return _Out(0, f"{name}: starting, pid {proc.pid} (background)\n".encode())
    if fx.behavior == "rootkit-A":
        release = state.config.kernel_release
        if fx.kernel and release.startswith(fx.kernel):
            state.uid, state.partial_root = 0, False
            return _Out(0, b"[+] mremap/brk exploit succeeded, spawning shell\n")
        msg = f"[-] kernel {release} is not supported by this exploit (built for {fx.kernel})\n" \
              "[-] exploit failed\n"
        return _Out(1, msg.encode())
    if fx.behavior == "rootkit-B":
        state.uid, state.partial_root = 0, True
        return _Out(0, b"[+] ld overflow done, uid=0\n")
    if fx.behavior == "mailer":
        rcpts = [a for a in argv[1:] if "@" in a] or list(fx.recipients)
        return _send_mail(ctx, rcpts, name)
    # inert
    return _Out(0)


def _send_mail(ctx: ExecContext, recipients: list[str], prog: str) -> _Out:
    domains = sorted({r.rsplit("@", 1)[-1] for r in recipients if "@" in r})
    if not domains:
        return _Out(1, stderr=f"{prog}: no recipients\n".encode())
    failed = [d for d in domains if ctx.egress(d, 25, "smtp") != "allow"]
    if failed:
        return _Out(1, stderr="".join(f"{prog}: {d}: Connection timed out\n" for d in failed).encode())
    return _Out(0, f"{prog}: sent to {len(recipients)} recipients\n".encode())


# --- commands ---------------------------------------------------------------------

def _err(prog: str, what: str, exc: FsError) -> bytes:
    return f"{prog}: {what}: {exc.strerror}\n".encode()


def cmd_ls(run: _Run, argv, stdin):
    flags = "".join(a[1:] for a in argv[1:] if a.startswith("-"))
    targets = [a for a in argv[1:] if not a.startswith("-")] or ["."]
    out, err, status = [], b"", 0
    for t in targets:
        p = run.path(t)
        node = run.vfs.get(p)
        if node is None:
            err += f"ls: {t}: {ENOENT}\n".encode()
            status = 2
            continue
        names = run.vfs.children(p) if node.is_dir else [posixpath.basename(p)]
        if "a" not in flags:
            names = [n for n in names if not n.startswith(".")]
        if "l" in flags:
            for n in names:
                child = run.vfs.get(posixpath.join(p, n)) if node.is_dir else node
                out.append(f"{_mode_str(child)} 1 {child.owner:<8} {child.owner:<8} {child.length:>8} {n}")
        else:
            out.extend(names)
    return _Out(status, "".join(x + "\n" for x in out).encode(), err)


def _mode_str(node) -> str:
    bits = "d" if node.is_dir else "-"
    for shift in (6, 3, 0):
        m = (node.mode >> shift) & 7
        bits += ("r" if m & 4 else "-") + ("w" if m & 2 else "-") + ("x" if m & 1 else "-")
    if node.mode & 0o1000:
        bits = bits[:-1] + ("t" if node.mode & 1 else "T")
    return bits


def cmd_cd(run: _Run, argv, stdin):
    target = run.path(argv[1]) if len(argv) > 1 else run.state.home
    node = run.vfs.get(target)
    if node is None:
        return _Out(1, stderr=f"-bash: cd: {argv[1]}: {ENOENT}\n".encode())
    if not node.is_dir:
        return _Out(1, stderr=f"-bash: cd: {argv[1]}: Not a directory\n".encode())
    if not run.state.identity.root and not run.vfs.can_exec(node, run.state.identity):
        return _Out(1, stderr=f"-bash: cd: {argv[1]}: Permission denied\n".encode())
    run.state.cwd = target
    return _Out()


def cmd_pwd(run: _Run, argv, stdin):
    return _Out(0, (run.state.cwd + "\n").encode())


def cmd_cat(run: _Run, argv, stdin):
    files = [a for a in argv[1:] if not a.startswith("-")]
    if not files:
        return _Out(0, stdin)
    out, err, status = b"", b"", 0
    for f in files:
        try:
            out += run.vfs.read(run.path(f), run.state.identity)
        except FsError as exc:
            err += _err("cat", f, exc)
            status = 1
    return _Out(status, out, err)


def cmd_grep(run: _Run, argv, stdin):
    args = argv[1:]
    flags = "".join(a[1:] for a in args if a.startswith("-"))
    rest = [a for a in args if not a.startswith("-")]
    if not rest:
        return _Out(2, stderr=b"Usage: grep [OPTION]... PATTERN [FILE]...\n")
    pattern, files = rest[0], rest[1:]
    data = stdin
    if files:
        data = b""
        for f in files:
            try:
                data += run.vfs.read(run.path(f), run.state.identity)
            except FsError as exc:
                return _Out(2, stderr=_err("grep", f, exc))
    pat = s2b(pattern)
    keep = []
    for ln in data.splitlines():
        hit = pat.lower() in ln.lower() if "i" in flags else pat in ln
        if hit != ("v" in flags):
            keep.append(ln)
    return _Out(0 if keep else 1, b"".join(k + b"\n" for k in keep))


def cmd_w(run: _Run, argv, stdin):
    st, ctx = run.state, run.ctx
    up = max((ctx.ts - st.config.boot_ts).days, 0)
    hhmm = ctx.ts.strftime("%H:%M")
    head = f" {ctx.ts.strftime('%H:%M:%S')} up {up} days,  1 user,  load average: 0.00, 0.01, 0.00\n"
    head += "USER     TTY      FROM              LOGIN@   IDLE   JCPU   PCPU WHAT\n"
    head += f"{st.account:<8} {ctx.tty:<8} {ctx.source_ip:<17} {hhmm}    0.00s  0.01s  0.00s w\n"
    return _Out(0, head.encode())


def cmd_uptime(run: _Run, argv, stdin):
    up = max((run.ctx.ts - run.state.config.boot_ts).days, 0)
    return _Out(0, f" {run.ctx.ts.strftime('%H:%M:%S')} up {up} days,  1 user,  "
                   "load average: 0.00, 0.01, 0.00\n".encode())


def cmd_ps(run: _Run, argv, stdin):
    st = run.state
    every = any(c in a for a in argv[1:] for c in "aex")
    procs = [p for p in sorted(st.procs.values(), key=lambda p: p.pid)
             if every or p.user in (st.account, st.shown_user)]
    lines = ["USER       PID TTY      CMD"]
    lines += [f"{p.user:<8} {p.pid:>5} {p.tty:<8} {p.cmd}" for p in procs]
    return _Out(0, "".join(x + "\n" for x in lines).encode())


def cmd_kill(run: _Run, argv, stdin):
    st = run.state
    pids = [a for a in argv[1:] if not a.startswith("-")]
    if not pids:
        return _Out(2, stderr=b"kill: usage: kill [-s sigspec | -n signum | -sigspec] pid ...\n")
    err, status = b"", 0
    for a in pids:
        if not a.isdigit():
            err += f"-bash: kill: {a}: arguments must be process or job IDs\n".encode()
            status = 1
            continue
        proc = st.procs.get(int(a))
        if proc is None:
            err += f"-bash: kill: ({a}) - No such process\n".encode()
            status = 1
        elif not st.identity.root and proc.user not in (st.account, st.shown_user):
            err += f"-bash: kill: ({a}) - {EPERM}\n".encode()
            status = 1
        else:
            del st.procs[proc.pid]
    return _Out(status, stderr=err)


def cmd_uname(run: _Run, argv, stdin):
    cfg = run.state.config
    flags = "".join(a[1:] for a in argv[1:] if a.startswith("-"))
    if "a" in flags:
        return _Out(0, (cfg.uname_a + "\n").encode())
    parts = []
    for f, val in (("s", "Linux"), ("n", cfg.hostname), ("r", cfg.kernel_release),
                   ("v", cfg.kernel_build), ("m", cfg.machine)):
        if f in flags:
            parts.append(val)
    return _Out(0, (" ".join(parts or ["Linux"]) + "\n").encode())


def cmd_id(run: _Run, argv, stdin):
    st = run.state
    u = st.account_uid
    who = "0(root)" if st.uid == 0 else f"{u}({st.account})"
    return _Out(0, f"uid={who} gid={u}({st.account}) groups={u}({st.account})\n".encode())


def cmd_whoami(run: _Run, argv, stdin):
    return _Out(0, (run.state.shown_user + "\n").encode())


def cmd_hostname(run: _Run, argv, stdin):
    return _Out(0, (run.state.config.hostname + "\n").encode())


def cmd_echo(run: _Run, argv, stdin):
    args = argv[1:]
    nl, esc = True, False
    while args and args[0] in ("-n", "-e", "-ne", "-en"):
        nl = nl and "n" not in args[0]
        esc = esc or "e" in args[0]
        args = args[1:]
    text = " ".join(args)
    if esc:
        text = text.replace("\\n", "\n").replace("\\t", "\t")
    return _Out(0, s2b(text + ("\n" if nl else "")))


def cmd_export(run: _Run, argv, stdin):
    if len(argv) == 1:
        env = run.state.env
        return _Out(0, "".join(f'declare -x {k}="{env[k]}"\n' for k in sorted(env)).encode())
    for a in argv[1:]:
        key, eq, val = a.partition("=")
        if eq:
            run.state.env[key] = val
    return _Out()


def cmd_unset(run: _Run, argv, stdin):
    for a in argv[1:]:
        run.state.env.pop(a, None)
    return _Out()


def cmd_history(run: _Run, argv, stdin):
    st = run.state
    if "-c" in argv[1:]:
        st.history.clear()
        _sync_history(st)
        return _Out()
    return _Out(0, "".join(f"{i:>5}  {h}\n" for i, h in enumerate(st.history, 1))
                .encode("utf-8", "surrogateescape"))


def cmd_exit(run: _Run, argv, stdin):
    return _Out(0, b"logout\n", logout=True)


def cmd_touch(run: _Run, argv, stdin):
    err = b""
    for f in (a for a in argv[1:] if not a.startswith("-")):
        p = run.path(f)
        if run.vfs.exists(p):
            continue
        try:
            run.vfs.write(p, b"", run.state.identity)
        except FsError as exc:
            err += f"touch: cannot touch `{f}': {exc.strerror}\n".encode()
    return _Out(1 if err else 0, stderr=err)


def cmd_mkdir(run: _Run, argv, stdin):
    parents = "-p" in argv[1:]
    err = b""
    for d in (a for a in argv[1:] if not a.startswith("-")):
        try:
            run.vfs.mkdir(run.path(d), run.state.identity, parents=parents)
        except FsError as exc:
            err += f"mkdir: cannot create directory `{d}': {exc.strerror}\n".encode()
    return _Out(1 if err else 0, stderr=err)


def cmd_rm(run: _Run, argv, stdin):
    st = run.state
    flags = "".join(a[1:] for a in argv[1:] if a.startswith("-"))
    force, recursive = "f" in flags, "r" in flags or "R" in flags
    err, status = b"", 0
    for f in (a for a in argv[1:] if not a.startswith("-")):
        p = run.path(f)
        try:
            run.vfs.remove(p, st.identity, recursive=recursive)
        except FsError as exc:
            if force and exc.strerror == ENOENT:
                continue
            err += f"rm: cannot remove `{f}': {exc.strerror}\n".encode()
            status = 1
            continue
        if p == st.history_path or st.history_path.startswith(p + "/"):
            st.history.clear()
    return _Out(status, stderr=err)


def cmd_mv(run: _Run, argv, stdin):
    args = [a for a in argv[1:] if not a.startswith("-")]
    if len(args) < 2:
        return _Out(1, stderr=b"mv: missing file operand\n")
    *srcs, dst = args
    err = b""
    for s in srcs:
        try:
            run.vfs.move(run.path(s), run.path(dst), run.state.identity)
        except FsError as exc:
            err += f"mv: cannot move `{s}' to `{dst}': {exc.strerror}\n".encode()
    return _Out(1 if err else 0, stderr=err)


_SYM = re.compile(r"^([ugoa]*)([+\-=])([rwxXst]*)$")


def _parse_mode(spec: str, current: int) -> int | None:
    if re.fullmatch(r"[0-7]{1,4}", spec):
        return int(spec, 8)
    mode = current
    for clause in spec.split(","):
        m = _SYM.match(clause)
        if not m:
            return None
        who, op, perms = m.groups()
        who = who or "a"
        mask = 0
        for w in who:
            shifts = {"u": (6,), "g": (3,), "o": (0,), "a": (6, 3, 0)}[w]
            for sh in shifts:
                for p, bit in (("r", 4), ("w", 2), ("x", 1), ("X", 1)):
                    if p in perms:
                        mask |= bit << sh
        if op == "+":
            mode |= mask
        elif op == "-":
            mode &= ~mask
        else:
            mode = (mode & ~0o777) | mask
    return mode


def cmd_chmod(run: _Run, argv, stdin):
    args = [a for a in argv[1:] if not (a.startswith("-") and len(a) > 1 and a[1] not in "rwx")]
    if len(args) < 2:
        return _Out(1, stderr=b"chmod: missing operand\n")
    spec, files = args[0], args[1:]
    err = b""
    for f in files:
        p = run.path(f)
        node = run.vfs.get(p)
        if node is None:
            err += f"chmod: cannot access `{f}': {ENOENT}\n".encode()
            continue
        mode = _parse_mode(spec, node.mode)
        if mode is None:
            return _Out(1, stderr=f"chmod: invalid mode: `{spec}'\n".encode())
        try:
            run.vfs.chmod(p, mode, run.state.identity)
        except FsError as exc:
            err += f"chmod: changing permissions of `{f}': {exc.strerror}\n".encode()
    return _Out(1 if err else 0, stderr=err)


def _member_mode(fx: Fixture | None) -> int:
    return 0o755 if fx is not None and fx.executable else 0o644


def cmd_tar(run: _Run, argv, stdin):
    st = run.state
    args = argv[1:]
    flags = ""
    if args and not args[0].startswith("-"):
        flags, args = args[0], args[1:]
    target, positional = st.cwd, []
    it = iter(args)
    for a in it:
        if a == "-C":
            target = run.path(next(it, "."))
        elif a.startswith("--directory="):
            target = run.path(a.split("=", 1)[1])
        elif a.startswith("-"):
            flags += a.lstrip("-")
        else:
            positional.append(a)
    if "f" not in flags or not positional:
        return _Out(2, stderr=b"tar: You must specify one of the `-Acdtrux' options\n")
    archive = positional[0]
    apath = run.path(archive)
    if "c" in flags:
        try:
            run.vfs.write(apath, b"", st.identity, size=10240)
        except FsError as exc:
            return _Out(2, stderr=_err("tar", archive, exc))
        return _Out()
    node = run.vfs.get(apath)
    if node is None:
        return _Out(2, stderr=f"tar: {archive}: Cannot open: {ENOENT}\n".encode())
    if not run.vfs.can_read(node, st.identity):
        return _Out(2, stderr=f"tar: {archive}: Cannot open: Permission denied\n".encode())
    fx = st.config.catalog.get(node.fixture)
    if fx is None or fx.behavior != "archive":
        return _Out(2, stderr=b"tar: This does not look like a tar archive\n")
    if "t" in flags:
        return _Out(0, "".join(m + "\n" for m in fx.contents).encode())
    if "x" not in flags:
        return _Out(2, stderr=b"tar: You must specify one of the `-Acdtrux' options\n")
    out, err = b"", b""
    for member in fx.contents:
        mfx = st.config.catalog.get(member)
        try:
            run.vfs.write(posixpath.join(target, member), b"", st.identity, mode=_member_mode(mfx),
                          fixture=member, size=mfx.size if mfx else 0)
        except FsError as exc:
            err += f"tar: {member}: Cannot open: {exc.strerror}\n".encode()
            continue
        if "v" in flags:
            out += (member + "\n").encode()
    if err:
        err += b"tar: Error exit delayed from previous errors\n"
    return _Out(2 if err else 0, out, err)


def cmd_gzip(run: _Run, argv, stdin):
    st = run.state
    decompress = argv[0].endswith("gunzip") or any(a in ("-d", "--decompress") for a in argv[1:])
    err = b""
    for f in (a for a in argv[1:] if not a.startswith("-")):
        src = run.path(f)
        if decompress:
            if f.endswith(".tgz"):
                dst = src[:-4] + ".tar"
            elif f.endswith(".gz"):
                dst = src[:-3]
            else:
                err += f"gzip: {f}: unknown suffix -- ignored\n".encode()
                continue
        else:
            dst = src + ".gz"
        try:
            run.vfs.move(src, dst, st.identity)
        except FsError as exc:
            err += _err("gzip", f, exc)
    return _Out(1 if err else 0, stderr=err)


def _save_fixture(run: _Run, fx_name: str, dest: str) -> FsError | None:
    st = run.state
    fx = st.config.catalog.get(fx_name)
    try:
        run.vfs.write(dest, b"", st.identity, mode=0o644, fixture=fx_name, size=fx.size if fx else 0)
    except FsError as exc:
        return exc
    return None


def cmd_wget(run: _Run, argv, stdin):
    st, ctx = run.state, run.ctx
    urls, out_name = [], None
    it = iter(argv[1:])
    for a in it:
        if a == "-O":
            out_name = next(it, None)
        elif a.startswith("-"):
            continue
        else:
            urls.append(a)
    if not urls:
        return _Out(1, stderr=b"wget: missing URL\nUsage: wget [OPTION]... [URL]...\n")
    stamp = ctx.ts.strftime("%H:%M:%S")
    err, status = b"", 0
    for url in urls:
        parts = urlsplit(url if "://" in url else "http://" + url)
        host = parts.hostname or ""
        try:
            port = parts.port or {"https": 443, "ftp": 21}.get(parts.scheme, 80)
        except ValueError:
            port = 80
        fname = posixpath.basename(parts.path) or "index.html"
        proto = "ftp" if parts.scheme == "ftp" else "http"
        text = f"--{stamp}--  {url}\n           => `{fname}'\nResolving {host}... {host}\n"
        text += f"Connecting to {host}|{host}|:{port}... "
        if ctx.egress(host, port, proto) != "allow":
            text += "failed: Connection timed out.\nRetrying.\n\n"
            text += f"--{stamp}--  {url}\n  (try: 2) => `{fname}'\n"
            text += f"Connecting to {host}|{host}|:{port}... failed: Connection timed out.\n"
            text += "Giving up.\n\n"
            err += text.encode()
            status = 4
            continue
        text += "connected.\nHTTP request sent, awaiting response... "
        if fname not in st.config.catalog:
            err += (text + f"404 Not Found\n{stamp} ERROR 404: Not Found.\n\n").encode()
            status = 8
            continue
        dest = run.path(out_name or fname)
        problem = _save_fixture(run, fname, dest)
        if problem is not None:
            err += (text + f"200 OK\n{fname}: {problem.strerror}\n\n").encode()
            status = 3
            continue
        size = st.config.catalog.get(fname).size
        text += f"200 OK\nLength: {size}\n\n{stamp} - `{fname}' saved [{size}/{size}]\n\n"
        err += text.encode()
    return _Out(status, stderr=err)


def cmd_inband_get(run: _Run, argv, stdin):
    """sftp analogue: pull a file through the already-open ssh channel."""
    st, ctx = run.state, run.ctx
    names = [a for a in argv[1:] if not a.startswith("-")]
    if not names:
        return _Out(1, stderr=b"usage: inband-get <remote-file> [local-path]\n")
    remote = names[0]
    fname = posixpath.basename(remote)
    if ctx.egress(ctx.source_ip, 22, "inband") != "allow":
        return _Out(1, stderr=b"Connection closed\n")
    if fname not in st.config.catalog:
        return _Out(1, stderr=f"inband-get: {remote}: No such file\n".encode())
    dest = run.path(names[1]) if len(names) > 1 else run.path(fname)
    if run.vfs.isdir(dest):
        dest = posixpath.join(dest, fname)
    problem = _save_fixture(run, fname, dest)
    if problem is not None:
        return _Out(1, stderr=f"inband-get: {dest}: {problem.strerror}\n".encode())
    size = st.config.catalog.get(fname).size
    return _Out(0, f"Fetching {remote} to {fname}\n{fname}  100%  {size}\n".encode())


def cmd_mail(run: _Run, argv, stdin):
    args, rcpts = argv[1:], []
    skip = False
    for a in args:
        if skip:
            skip = False
        elif a in ("-s", "-c", "-b", "-f"):
            skip = True
        elif not a.startswith("-"):
            rcpts.append(a)
    return _send_mail(run.ctx, rcpts, posixpath.basename(argv[0]))


def cmd_ssh(run: _Run, argv, stdin):
    port, host = 22, None
    it = iter(argv[1:])
    for a in it:
        if a == "-p":
            val = next(it, "22")
            port = int(val) if val.isdigit() else 22
        elif a in ("-l", "-i", "-o"):
            next(it, None)
        elif a.startswith("-"):
            continue
        elif host is None:
            host = a.rsplit("@", 1)[-1]
    if host is None:
        return _Out(255, stderr=b"usage: ssh [-l login_name] [-p port] [user@]hostname\n")
    if run.ctx.egress(host, port, "ssh") != "allow":
        return _Out(255, stderr=f"ssh: connect to host {host} port {port}: Connection timed out\n".encode())
    return _Out(255, stderr=f"Connection closed by {host}\n".encode())


def cmd_ping(run: _Run, argv, stdin):
    hosts = [a for a in argv[1:] if not a.startswith("-")]
    if not hosts:
        return _Out(2, stderr=b"usage: ping host\n")
    h = hosts[-1]
    ok = run.ctx.egress(h, 0, "icmp") == "allow"
    got = 4 if ok else 0
    text = f"PING {h} ({h}) 56(84) bytes of data.\n\n--- {h} ping statistics ---\n" \
           f"4 packets transmitted, {got} received, {100 - got * 25}% packet loss, time 3000ms\n"
    return _Out(0 if ok else 1, text.encode())


_DMESG = """Linux version {rel} (gcc version 4.0.0) {build}
BIOS-provided physical RAM map:
 BIOS-e820: 0000000000000000 - 000000000009f800 (usable)
128MB LOWMEM available.
Kernel command line: ro root=/dev/VolGroup00/LogVol00
Detected 2793.254 MHz processor.
eth0: link up, 100Mbps, full-duplex
"""


def cmd_dmesg(run: _Run, argv, stdin):
    cfg = run.state.config
    return _Out(0, _DMESG.format(rel=cfg.kernel_release, build=cfg.kernel_build).encode())


def cmd_lspci(run: _Run, argv, stdin):
    return _Out(0, b"00:00.0 Host bridge: Intel Corporation 82875P Memory Controller Hub (rev 02)\n"
                   b"00:1f.1 IDE interface: Intel Corporation 82801EB Ultra ATA Storage Controller\n"
                   b"02:01.0 Ethernet controller: Intel Corporation 82540EM Gigabit Ethernet\n")


def builtin_passwd(state: SandboxState, old: bytes, new: bytes, ctx: ExecContext) -> bool:
    """Atomically swap the account password in the credential policy."""
    return bool(new) and ctx.change_password(old, new)


def cmd_passwd(run: _Run, argv, stdin):
    st, ctx = run.state, run.ctx
    others = [a for a in argv[1:] if not a.startswith("-")]
    if others and others[0] != st.account and not st.identity.root:
        return _Out(1, stderr=b"passwd: Only root can specify a user name.\n")
    fail = b"passwd: Authentication token manipulation error\n"

    def want_old(line: bytes) -> ExecResult:
        if not ctx.verify_password(line):
            return ExecResult(b"\n" + fail, status=1)
        return ExecResult(b"\nNew UNIX password: ", pending=PendingInput(lambda nl: want_new(line, nl)))

    def want_new(old: bytes, new: bytes) -> ExecResult:
        if not new:
            return ExecResult(b"\nNo password supplied\n" + fail, status=1)
        return ExecResult(b"\nRetype new UNIX password: ",
                          pending=PendingInput(lambda again: confirm(old, new, again)))

    def confirm(old: bytes, new: bytes, again: bytes) -> ExecResult:
        if again != new:
            return ExecResult(b"\nSorry, passwords do not match.\n" + fail, status=1)
        if not builtin_passwd(st, old, new, ctx):
            return ExecResult(b"\n" + fail, status=1)
        return ExecResult(b"\npasswd: all authentication tokens updated successfully.\n")

    head = f"Changing password for user {st.account}.\nChanging password for {st.account}\n" \
           "(current) UNIX password: "
    return _Out(0, head.encode(), pending=PendingInput(want_old))


COMMANDS: dict[str, Callable] = {
    "ls": cmd_ls, "cd": cmd_cd, "pwd": cmd_pwd, "cat": cmd_cat, "grep": cmd_grep, "w": cmd_w,
    "uptime": cmd_uptime, "ps": cmd_ps, "kill": cmd_kill, "uname": cmd_uname, "id": cmd_id,
    "whoami": cmd_whoami, "hostname": cmd_hostname, "echo": cmd_echo, "export": cmd_export,
    "unset": cmd_unset, "history": cmd_history, "exit": cmd_exit, "logout": cmd_exit,
    "touch": cmd_touch, "mkdir": cmd_mkdir, "rm": cmd_rm, "mv": cmd_mv, "chmod": cmd_chmod,
    "tar": cmd_tar, "gzip": cmd_gzip, "gunzip": cmd_gzip, "wget": cmd_wget,
    "inband-get": cmd_inband_get, "mail": cmd_mail, "sendmail": cmd_mail, "ssh": cmd_ssh,
    "ping": cmd_ping, "dmesg": cmd_dmesg, "lspci": cmd_lspci, "passwd": cmd_passwd,
}
