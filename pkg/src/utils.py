# Utility functions per il progetto
"""Bit/byte helpers, BER parsing and hashing shared by every module."""

from __future__ import annotations

from decimal import Decimal, InvalidOperation
from dataclasses import dataclass
from typing import Optional

import numpy as np
from Cryptodome.Hash import SHA256

# LLR magnitude cap, used by channel, fusion and BP alike
LLR_MAX = 30.0

# Probability clip applied before any log
PROB_EPS = 1e-6


class LengthMismatchError(ValueError):
    def __init__(self, what: str, expected: int, actual: int):
        super().__init__(f"{what}: expected length {expected}, received {actual}")
        self.expected = expected
        self.actual = actual


@dataclass(frozen=True)
class BitSegment:
    """A k-bit information block or n-bit codeword plus where it came from.

    ``bits`` is a read-only uint8 vector of 0/1 values. ``origin`` names the
    source file (or generator) and ``offset`` the bit offset inside it.
    """

    bits: np.ndarray
    file_type: Optional[str] = None
    origin: Optional[str] = None
    offset: int = 0

    def __post_init__(self):
        arr = as_bits(self.bits).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    def __len__(self) -> int:
        return int(self.bits.size)

    def __array__(self, dtype=None, copy=None):
        return self.bits if dtype is None else self.bits.astype(dtype)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitSegment):
            return NotImplemented
        return (
            np.array_equal(self.bits, other.bits)
            and self.file_type == other.file_type
            and self.origin == other.origin
            and self.offset == other.offset
        )

    def __hash__(self) -> int:
        return hash((self.bits.tobytes(), self.file_type, self.origin, self.offset))

    def digest(self) -> str:
        """SHA256 of the packed bits (used to check split disjointness)."""
        return sha256_hex(np.packbits(self.bits).tobytes() + len(self).to_bytes(8, "little"))


def as_bits(word) -> np.ndarray:
    """Return *word* as a 1-D uint8 array of 0/1, rejecting anything else."""
    if isinstance(word, BitSegment):
        return word.bits
    arr = np.asarray(word)
    if arr.ndim != 1:
        raise ValueError(f"bit vector must be 1-D, received shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise ValueError("bit vector contains values other than 0/1")
        arr = arr.astype(np.uint8)
    elif arr.size and arr.max(initial=0) > 1:
        raise ValueError("bit vector contains values other than 0/1")
    return arr


def bytes_to_bits(data: bytes) -> np.ndarray:
    """Expand *data* MSB-first into a uint8 bit vector."""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in as_bits(bits))


def parse_ber(text) -> float:
    """Parse a bit-error rate given as decimal (``0.008``) or percent (``0.8%``)."""
    if isinstance(text, (int, float)):
        value = float(text)
    else:
        s = str(text).strip()
        try:
            value = float(Decimal(s[:-1]) / 100) if s.endswith("%") else float(s)
        except (ValueError, InvalidOperation):
            raise ValueError(f"BER non valido: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"BER fuori da [0, 1]: {text!r}")
    return value


def parse_ber_list(text: str) -> list[float]:
    return [parse_ber(t) for t in str(text).split(",") if t.strip()]


def parse_int_list(text: str) -> list[int]:
    return [int(t) for t in str(text).split(",") if t.strip()]


def format_ber(p: float) -> str:
    """Canonical text for a BER, stable across runs (used in CSV rows)."""
    return repr(float(p))


def sha256_hex(data: bytes) -> str:
    return SHA256.new(data).hexdigest()

