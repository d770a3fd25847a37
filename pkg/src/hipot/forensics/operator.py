"""Human vs script: keystroke-chunk evidence per session."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from ..eventlog import Session
from ..tty import Line, LineAssembler

CHAR_CHUNKS = 4  # L: single-byte reads on one line that count as typing
MIN_PASTE = 8    # M: bytes of pasted input needed before calling it a script


class Verdict(str, Enum):
    HUMAN = "Human"
    SCRIPT = "Script"
    INCONCLUSIVE = "Inconclusive"


class Evidence(str, Enum):
    BACKSPACE = "BackspacePresent"
    CHAR_BY_CHAR = "CharByChar"
    PASTE_ONLY = "PasteOnly"
    TOO_SHORT = "TooShort"


@dataclass(frozen=True)
class OperatorVerdict:
    verdict: Verdict
    evidence: dict[Evidence, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value,
                "evidence": {k.value: v for k, v in sorted(self.evidence.items(), key=lambda kv: kv[0].value)}}


def reconstruct_input(chunks: Iterable[bytes]) -> list[Line]:
    """Rebuild command lines from raw tty reads, including an unterminated tail."""
    asm = LineAssembler()
    lines: list[Line] = []
    for chunk in chunks:
        lines.extend(asm.feed(chunk))
    tail = asm.flush()
    if tail is not None:
        lines.append(tail)
    return lines


def classify_lines(lines: list[Line], total_bytes: int, *, char_chunks: int = CHAR_CHUNKS,
                   min_paste: int = MIN_PASTE) -> OperatorVerdict:
    if not lines:
        return OperatorVerdict(Verdict.INCONCLUSIVE, {Evidence.TOO_SHORT: 0})
    bs = sum(ln.backspaces for ln in lines)
    typed = sum(1 for ln in lines if ln.single_char_chunks >= char_chunks)
    evidence: dict[Evidence, int] = {}
    if bs:
        evidence[Evidence.BACKSPACE] = bs
    if typed:
        evidence[Evidence.CHAR_BY_CHAR] = typed
    if evidence:
        return OperatorVerdict(Verdict.HUMAN, evidence)
    content = [ln for ln in lines if ln.text]
    if content and all(ln.pasted for ln in content) and total_bytes >= min_paste:
        return OperatorVerdict(Verdict.SCRIPT, {Evidence.PASTE_ONLY: len(content)})
    return OperatorVerdict(Verdict.INCONCLUSIVE, {Evidence.TOO_SHORT: len(lines)})


def classify_operator(session: Session | list[bytes], *, char_chunks: int = CHAR_CHUNKS,
                      min_paste: int = MIN_PASTE) -> OperatorVerdict:
    chunks = session.tty_reads() if isinstance(session, Session) else list(session)
    return classify_lines(reconstruct_input(chunks), sum(len(c) for c in chunks),
                          char_chunks=char_chunks, min_paste=min_paste)
