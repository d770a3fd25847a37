"""Reference implementations written independently of the package code."""
from __future__ import annotations

BS = (0x08, 0x7F)
EOL = (0x0A, 0x0D)


def tty_lines(data: bytes) -> list[tuple[bytes, bool, int]]:
    """Stack-machine line editor over a byte string.

    Returns (text, terminated, erase keys seen) per line, with a trailing
    unterminated line whenever any byte arrived after the last line end. An
    LF straight after a CR belongs to that CR.
    """
    out = []
    stack: list[int] = []
    erases = 0
    dirty = False
    prev = None
    for b in data:
        if b == 0x0A and prev == 0x0D:
            prev = None
            continue
        prev = b
        dirty = True
        if b in EOL:
            out.append((bytes(stack), True, erases))
            stack, erases, dirty = [], 0, False
        elif b in BS:
            erases += 1
            if stack:
                stack.pop()
        else:
            stack.append(b)
    if dirty:
        out.append((bytes(stack), False, erases))
    return out


def percent_half_up(part: int, whole: int) -> str:
    """part/whole*100 rounded half-up to two decimals, using integers only."""
    if whole == 0:
        return "0.00"
    hundredths = (2 * part * 10000 + whole) // (2 * whole)
    return f"{hundredths // 100}.{hundredths % 100:02d}"
