"""Exec-level view of a session: each Exec with the egress it caused and the input lines around it."""
from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass, field

from ..eventlog import EventKind, Session, SessionEvent
from ..tty import Line, LineAssembler

PASSWD_OK = b"all authentication tokens updated successfully"


@dataclass
class Step:
    exec: SessionEvent
    egress: list[SessionEvent] = field(default_factory=list)

    @property
    def name(self) -> str:
        path = self.exec.path or ""
        if path.startswith("builtin:"):
            return path[len("builtin:"):]
        return posixpath.basename(path)

    @property
    def argv(self) -> tuple[str, ...]:
        return self.exec.argv or ()


@dataclass
class PasswordChange:
    seq: int
    old: bytes
    new: bytes
    ok: bool


@dataclass
class SessionTrace:
    session: Session
    steps: list[Step]
    lines: list[Line]
    output: bytes
    password_changes: list[PasswordChange]

    @property
    def egress(self) -> list[SessionEvent]:
        return [e for s in self.steps for e in s.egress]


def build_trace(session: Session) -> SessionTrace:
    steps: list[Step] = []
    asm = LineAssembler()
    lines: list[Line] = []
    out = bytearray()
    # passwd bookkeeping: index of the line that launched it, and the change record
    open_passwd: list[tuple[int, PasswordChange]] = []
    consumed = -1
    for e in session.events:
        kind = e.kind
        if kind is EventKind.TTY_READ:
            lines.extend(asm.feed(e.data))
        elif kind is EventKind.TTY_WRITE:
            out += e.data
            if PASSWD_OK in e.data and open_passwd:
                _, change = open_passwd[-1]
                change.ok = True
        elif kind is EventKind.EXEC:
            steps.append(Step(e))
            if steps[-1].name == "passwd":
                idx = _launch_line(lines, consumed)
                # the three prompt answers follow the launching line
                consumed = idx + 3
                open_passwd.append((idx, PasswordChange(e.seq, b"", b"", False)))
        elif kind is EventKind.EGRESS and steps:
            steps[-1].egress.append(e)
    tail = asm.flush()
    if tail is not None:
        lines.append(tail)
    changes = []
    for idx, change in open_passwd:
        answers = [ln.text for ln in lines[idx + 1:idx + 4]]
        if len(answers) >= 2:
            change.old, change.new = answers[0], answers[1]
        changes.append(change)
    return SessionTrace(session, steps, lines, bytes(out), changes)


_SPLIT = re.compile(rb"&&|\|\||[;&|]")


def _launch_line(lines: list[Line], consumed: int) -> int:
    """Index of the earliest unconsumed input line with a ``passwd`` command segment."""
    for i in range(consumed + 1, len(lines)):
        for seg in _SPLIT.split(lines[i].text):
            words = seg.split()
            if words and posixpath.basename(words[0]) == b"passwd":
                return i
    return max(consumed, 0)
