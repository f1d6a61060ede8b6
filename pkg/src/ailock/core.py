"""Shared domain types and bitstring arithmetic."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

HASH_LEN = 256

VARIANTS = {
    "slss": (1, 1),
    "mlss": (1, 2),
    "slms": (5, 1),
    "mlms": (5, 2),
}


class DimensionError(ValueError):
    pass


class ParamError(ValueError):
    pass


def _exact(tau: float) -> Fraction:
    # repr() round-trips the decimal the user wrote, so 0.682 stays 682/1000
    return Fraction(repr(float(tau)))


def correction_capacity(lam: int, tau: float) -> int:
    """Number of bit errors tolerated by a ``lam``-bit print at threshold ``tau``.

    Computed in exact rational arithmetic: floor(lam * (1 - tau)).
    """
    if lam < 1:
        raise ParamError(f"lambda must be positive, got {lam}")
    if not 0.0 <= tau <= 1.0:
        raise ParamError(f"tau must lie in [0, 1], got {tau}")
    return int((lam * (1 - _exact(tau))) // 1)


@dataclass(frozen=True)
class ParamSet:
    lam: int
    tau: float
    pc_lo: int = 32
    pc_hi: int = 96
    s: int = 1
    t: int = 1
    l: int = 1
    hash_len: int = HASH_LEN

    def __post_init__(self):
        if self.lam < 8:
            raise ParamError(f"lambda must be >= 8, got {self.lam}")
        if not 0.5 < self.tau <= 1.0:
            raise ParamError(f"tau must lie in (0.5, 1.0], got {self.tau}")
        if not 0 <= self.pc_lo < self.pc_hi:
            raise ParamError(f"empty component range [{self.pc_lo}, {self.pc_hi})")
        if self.s < 1 or not 1 <= self.t <= self.s:
            raise ParamError(f"need 1 <= t <= s, got t={self.t}, s={self.s}")
        if self.l < 1:
            raise ParamError(f"layer count must be >= 1, got {self.l}")
        if self.hash_len != HASH_LEN:
            raise ParamError(f"hash length is fixed at {HASH_LEN} bits")

    @classmethod
    def for_variant(cls, variant: str, lam: int, tau: float, **kw) -> "ParamSet":
        try:
            s, l = VARIANTS[variant]
        except KeyError:
            raise ParamError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}") from None
        kw.setdefault("t", 3 if s == 5 else 1)
        return cls(lam=lam, tau=tau, s=s, l=l, **kw)

    @property
    def c(self) -> int:
        return correction_capacity(self.lam, self.tau)

    @property
    def p(self) -> int:
        return self.pc_hi - self.pc_lo

    @property
    def total_bits(self) -> int:
        return self.s * self.l * self.lam

    @property
    def variant(self) -> str | None:
        for name, shape in VARIANTS.items():
            if shape == (self.s, self.l):
                return name
        return None


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise DimensionError("embedding must be a vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class Imageprint:
    """Fixed-length bitstring. ``bits`` holds one 0/1 byte per bit."""

    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.ndim != 1:
            raise DimensionError("imageprint bits must be one-dimensional")
        if b.size and b.max() > 1:
            raise ValueError("imageprint bits must be 0 or 1")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, Imageprint):
            return NotImplemented
        return self.length == other.length and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash(self.packed())

    def __xor__(self, other: "Imageprint") -> "Imageprint":
        if self.length != other.length:
            raise DimensionError(f"length mismatch: {self.length} vs {other.length}")
        return Imageprint(self.bits ^ other.bits)

    def packed(self) -> bytes:
        return pack_bits(self.bits)

    @classmethod
    def from_packed(cls, data: bytes, length: int) -> "Imageprint":
        return cls(unpack_bits(data, length))

    @classmethod
    def concat(cls, prints: Sequence["Imageprint"]) -> "Imageprint":
        return cls(np.concatenate([p.bits for p in prints]))

    def __str__(self):
        return "".join("1" if b else "0" for b in self.bits)


def pack_bits(bits: np.ndarray) -> bytes:
    """Bit i goes to byte i // 8 at position i % 8 (little-endian within bytes)."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(data: bytes, length: int) -> np.ndarray:
    need = (length + 7) // 8
    if len(data) != need:
        raise DimensionError(f"expected {need} bytes for {length} bits, got {len(data)}")
    raw = np.frombuffer(data, dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little")
    if bits[length:].any():
        raise ValueError("nonzero padding bits")
    return bits[:length].copy()


@dataclass(frozen=True)
class HammingStats:
    distance: int
    length: int

    @property
    def normalized_distance(self) -> float:
        return self.distance / self.length

    @property
    def similarity(self) -> float:
        return 1.0 - self.distance / self.length


def hamming(a: Imageprint, b: Imageprint) -> HammingStats:
    if a.length != b.length:
        raise DimensionError(f"length mismatch: {a.length} vs {b.length}")
    if a.length == 0:
        raise DimensionError("cannot compare empty prints")
    return HammingStats(int(np.count_nonzero(a.bits != b.bits)), a.length)


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamming distance matrix between rows of two 0/1 matrices."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"length mismatch: {a.shape[1]} vs {b.shape[1]}")
    # float32 is exact for counts below 2**24
    d = a @ (1.0 - b).T + (1.0 - a) @ b.T
    return np.rint(d).astype(np.int64)
