from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hipot.forensics import reconstruct_input
from hipot.tty import LineAssembler

from .oracles import tty_lines

ALPHABET = (b"a", b"\x08", b"\n")


def observed(lines):
    return [(ln.text, ln.terminated, ln.backspaces) for ln in lines]


def per_byte(data: bytes) -> list[bytes]:
    return [data[i:i + 1] for i in range(len(data))]


def test_exhaustive_single_chunk_up_to_12():
    mismatches = 0
    for n in range(13):
        for combo in itertools.product(ALPHABET, repeat=n):
            data = b"".join(combo)
            mismatches += observed(reconstruct_input([data])) != tty_lines(data)
    assert mismatches == 0


def test_exhaustive_per_byte_up_to_9():
    for n in range(10):
        for combo in itertools.product(ALPHABET, repeat=n):
            data = b"".join(combo)
            assert observed(reconstruct_input(list(combo))) == tty_lines(data)


def test_random_long_inputs_with_random_chunking():
    rng = random.Random(5)
    pool = b"ab \x08\x7f\r\n"
    for _ in range(10_000):
        data = bytes(rng.choice(pool) for _ in range(rng.randint(0, 256)))
        cuts = sorted(rng.sample(range(1, len(data)), min(len(data) - 1, rng.randint(0, 20)))) if data else []
        chunks = [data[i:j] for i, j in zip([0] + cuts, cuts + [len(data)])]
        assert observed(reconstruct_input(chunks)) == tty_lines(data)


@pytest.mark.parametrize("chunks,text", [
    ([b"ls\r\n"], b"ls"),
    ([b"l", b"s", b"\r", b"\n"], b"ls"),
    ([b"lx\x7fs\n"], b"ls"),
    ([b"\x08\x08ls\n"], b"ls"),
])
def test_simple_lines(chunks, text):
    lines = reconstruct_input(chunks)
    assert len(lines) == 1 and lines[0].text == text


def test_crlf_counts_once_across_chunks():
    asm = LineAssembler()
    assert len(asm.feed(b"w\r")) == 1
    assert asm.feed(b"\n") == []
    assert asm.flush() is None


def test_chunk_statistics():
    typed = reconstruct_input(per_byte(b"uname -a\r"))[0]
    assert typed.single_char_chunks == 9 and not typed.pasted
    pasted = reconstruct_input([b"uname -a\n"])[0]
    assert pasted.pasted and pasted.chunks == 1 and pasted.max_chunk == 9


@given(st.lists(st.binary(max_size=16), max_size=12))
def test_text_independent_of_chunking(chunks):
    joined = b"".join(chunks)
    assert [ln.text for ln in reconstruct_input(chunks)] == [ln.text for ln in reconstruct_input([joined])]
