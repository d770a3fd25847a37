"""Line assembly over raw tty input chunks.

Shared by the sensor (to dispatch commands) and by the forensics pipeline
(to rebuild what the intruder typed). Backspace (0x08) and DEL (0x7f) erase
the previous character; CR or LF terminate a line, and an LF immediately
following a CR is swallowed so that CRLF counts once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

BACKSPACES = frozenset((0x08, 0x7F))
CR, LF = 0x0D, 0x0A


@dataclass
class Line:
    text: bytes
    backspaces: int = 0
    chunks: int = 0
    single_char_chunks: int = 0
    max_chunk: int = 0
    terminated: bool = True

    @property
    def pasted(self) -> bool:
        """True when the whole line arrived in one multi-byte read."""
        return self.chunks == 1 and self.max_chunk > 1


@dataclass
class LineAssembler:
    """Incremental line editor; feed chunks in order, collect finished lines."""

    _buf: bytearray = field(default_factory=bytearray)
    _backspaces: int = 0
    _chunk_sizes: list = field(default_factory=list)
    _after_cr: bool = False
    _touched: bool = False

    def feed(self, chunk: bytes) -> list[Line]:
        done: list[Line] = []
        size = len(chunk)
        counted = False
        for b in chunk:
            if self._after_cr:
                self._after_cr = False
                if b == LF:
                    continue
            if not counted:
                self._chunk_sizes.append(size)
                counted = True
            self._touched = True
            if b in (CR, LF):
                done.append(self._finish(True))
                self._after_cr = b == CR
                counted = False
            elif b in BACKSPACES:
                self._backspaces += 1
                if self._buf:
                    del self._buf[-1]
            else:
                self._buf.append(b)
        return done

    def flush(self) -> Line | None:
        """Return the unterminated tail, if any input arrived since the last line."""
        if not self._touched:
            return None
        return self._finish(False)

    @property
    def pending(self) -> bytes:
        return bytes(self._buf)

    def _finish(self, terminated: bool) -> Line:
        sizes = self._chunk_sizes
        line = Line(
            text=bytes(self._buf),
            backspaces=self._backspaces,
            chunks=len(sizes),
            single_char_chunks=sum(1 for s in sizes if s == 1),
            max_chunk=max(sizes, default=0),
            terminated=terminated,
        )
        self._buf = bytearray()
        self._backspaces = 0
        self._chunk_sizes = []
        self._touched = False
        return line
