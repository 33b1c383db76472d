"""Text-stream randomness extraction and bit-stream auditing.

Pipeline: each short text message collapses to one bit (the parity of the
total popcount of its characters' code points), blocks of eight such bits
collapse to one whitened bit by XOR, and the result is finally XORed with
one fresh quantum bit per use. Auditing covers bias estimation against the
1/(2 sqrt(N)) counting uncertainty and a Fisher exact independence test
between two bit streams paired by index.

Parity is invariant under character reordering and under leading zeros in
the binary representation of a code point, so the popcount formulation is
representation independent.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from . import exact

MAX_MESSAGE_CHARS = 140

_BITS = (0, 1)


@dataclass(frozen=True)
class BitStream:
    """Immutable ordered bit sequence with a source label."""

    bits: tuple[int, ...]
    source: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", tuple(self.bits))
        for b in self.bits:
            if b not in _BITS or isinstance(b, bool):
                raise ValueError(f"stream may contain only bits 0 and 1, got {b!r}")

    def __len__(self) -> int:
        return len(self.bits)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)


@dataclass(frozen=True)
class BiasEstimate:
    """|mean - 1/2| with its 1/(2 sqrt(n)) statistical uncertainty."""

    bias: float
    uncertainty: float
    n: int


def message_to_bit(text: str, max_chars: int = MAX_MESSAGE_CHARS) -> int:
    """Parity of the total number of ones across the code points of `text`.

    An empty message yields 0 (the empty parity) with a warning rather than
    an error.
    """
    if len(text) > max_chars:
        raise ValueError(f"message has {len(text)} characters, limit is {max_chars}")
    if not text:
        warnings.warn("empty message maps to bit 0", stacklevel=2)
        return 0
    parity = 0
    for ch in text:
        parity ^= ord(ch).bit_count() & 1
    return parity


def extract_bits(messages: Iterable[str], max_chars: int = MAX_MESSAGE_CHARS, source: str = "") -> BitStream:
    """One parity bit per message."""
    return BitStream(bits=tuple(message_to_bit(m, max_chars) for m in messages), source=source)


def block8(stream: BitStream) -> BitStream:
    """XOR-combine consecutive blocks of eight bits into one bit each.

    A trailing remainder of fewer than eight bits is dropped.
    """
    if len(stream) < 8:
        raise ValueError(f"need at least 8 bits, got {len(stream)}")
    bits = stream.as_array()
    blocks = bits[: len(bits) // 8 * 8].reshape(-1, 8)
    combined = np.bitwise_xor.reduce(blocks, axis=1)
    return BitStream(bits=tuple(int(b) for b in combined), source=f"{stream.source}/block8")


def estimate_bias(stream: BitStream) -> BiasEstimate:
    """Deviation of the ones fraction from 1/2, with counting uncertainty."""
    n = len(stream)
    if n == 0:
        raise ValueError("cannot estimate bias of an empty stream")
    mean = sum(stream.bits) / n
    return BiasEstimate(bias=abs(mean - 0.5), uncertainty=1.0 / (2.0 * math.sqrt(n)), n=n)


def xor_combine(classical: Sequence[int], quantum: int) -> int:
    """XOR of exactly eight classical bits and one quantum bit."""
    if len(classical) != 8:
        raise ValueError(f"expected exactly 8 classical bits, got {len(classical)}")
    if quantum not in _BITS or isinstance(quantum, bool):
        raise ValueError(f"quantum bit must be 0 or 1, got {quantum!r}")
    out = quantum
    for b in classical:
        if b not in _BITS or isinstance(b, bool):
            raise ValueError(f"classical bits must be 0 or 1, got {b!r}")
        out ^= b
    return out


def combine_streams(classical: BitStream, quantum: BitStream) -> BitStream:
    """Apply xor_combine blockwise: 8 classical bits + 1 quantum bit each.

    The classical stream must be exactly eight times as long as the quantum
    stream.
    """
    if len(classical) != 8 * len(quantum):
        raise ValueError(
            f"classical stream has {len(classical)} bits, need exactly 8 per quantum bit "
            f"({8 * len(quantum)} for {len(quantum)} quantum bits)"
        )
    blocks = classical.as_array().reshape(-1, 8)
    combined = np.bitwise_xor.reduce(blocks, axis=1) ^ quantum.as_array()
    return BitStream(bits=tuple(int(b) for b in combined), source=f"{classical.source}+quantum")


def independence_test(a: BitStream, b: BitStream) -> float:
    """Two-sided Fisher exact P-value for independence of index-paired bits."""
    if len(a) != len(b):
        raise ValueError(f"streams must have equal length, got {len(a)} and {len(b)}")
    if len(a) == 0:
        raise ValueError("cannot test empty streams")
    aa = a.as_array()
    bb = b.as_array()
    n11 = int(np.sum((aa == 1) & (bb == 1)))
    n10 = int(np.sum((aa == 1) & (bb == 0)))
    n01 = int(np.sum((aa == 0) & (bb == 1)))
    n00 = int(np.sum((aa == 0) & (bb == 0)))
    return exact.fisher_two_sided(n00, n01, n10, n11)


def read_messages(source: str | IO[str]) -> list[str]:
    """Read one message per line (UTF-8); the line terminator is stripped."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as handle:
            return read_messages(handle)
    return [line.rstrip("\r\n") for line in source]


def write_bits(target: str, stream: BitStream, packed: bool = False) -> None:
    """Write bits as ASCII 0/1 lines, or packed binary with a length header.

    The packed format is an 8-byte big-endian bit count followed by the
    bits packed MSB-first.
    """
    if packed:
        with open(target, "wb") as handle:
            handle.write(len(stream).to_bytes(8, "big"))
            handle.write(np.packbits(stream.as_array()).tobytes())
        return
    with open(target, "w", encoding="utf-8") as handle:
        for b in stream.bits:
            handle.write(f"{b}\n")


def read_bits(source: str, packed: bool = False, label: str = "") -> BitStream:
    """Read a bit file written by write_bits."""
    if packed:
        with open(source, "rb") as handle:
            raw = handle.read()
        if len(raw) < 8:
            raise ValueError(f"{source}: truncated packed bit file")
        count = int.from_bytes(raw[:8], "big")
        bits = np.unpackbits(np.frombuffer(raw[8:], dtype=np.uint8))
        if count > bits.size:
            raise ValueError(f"{source}: header promises {count} bits, file holds {bits.size}")
        return BitStream(bits=tuple(int(b) for b in bits[:count]), source=label or source)
    bits = []
    with open(source, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            if text not in ("0", "1"):
                raise ValueError(f"{source} line {lineno}: expected 0 or 1, got {text!r}")
            bits.append(int(text))
    return BitStream(bits=tuple(bits), source=label or source)
