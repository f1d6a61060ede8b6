"""Threshold secret sharing over GF(2**8), byte-wise."""
from __future__ import annotations

import itertools
import secrets
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .bch import gf_tables


class ReconstructionRefused(ValueError):
    pass


def _mul_table() -> np.ndarray:
    exp, log = gf_tables(8)
    a = np.arange(256)
    la = log[a]
    table = exp[(la[:, None] + la[None, :]) % 255].astype(np.uint8)
    table[0, :] = 0
    table[:, 0] = 0
    return table


GF256_MUL = _mul_table()
GF256_INV = np.zeros(256, dtype=np.uint8)
GF256_INV[1:] = [int(np.nonzero(GF256_MUL[a] == 1)[0][0]) for a in range(1, 256)]


def random_bytes(rng: np.random.Generator | None, n: int) -> bytes:
    if rng is None:
        return secrets.token_bytes(n)
    return rng.integers(0, 256, size=n, dtype=np.uint8).tobytes()


def make_rng(seed: int | None) -> np.random.Generator | None:
    """Seeded generator for reproducible runs; None means OS randomness."""
    return None if seed is None else np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class SecretShares:
    shares: tuple[bytes, ...]  # shares[i] is the evaluation at point i + 1
    t: int

    @property
    def s(self) -> int:
        return len(self.shares)

    def subset(self, points) -> dict[int, bytes]:
        return {p: self.shares[p - 1] for p in points}


def split_secret(x: bytes, t: int, s: int, rng: np.random.Generator | None = None) -> SecretShares:
    if not 1 <= t <= s <= 255:
        raise ValueError(f"need 1 <= t <= s <= 255, got t={t}, s={s}")
    secret = np.frombuffer(bytes(x), dtype=np.uint8)
    coeffs = [secret] + [np.frombuffer(random_bytes(rng, len(secret)), dtype=np.uint8) for _ in range(t - 1)]
    shares = []
    for point in range(1, s + 1):
        # Horner from the top coefficient down
        acc = np.zeros(len(secret), dtype=np.uint8)
        for a in reversed(coeffs):
            acc = GF256_MUL[acc, point] ^ a
        shares.append(acc.tobytes())
    return SecretShares(tuple(shares), t)


def lagrange_at_zero(points) -> dict[int, int]:
    weights = {}
    for i in points:
        num, den = 1, 1
        for j in points:
            if j != i:
                num = GF256_MUL[num, j]
                den = GF256_MUL[den, i ^ j]
        weights[i] = int(GF256_MUL[num, GF256_INV[den]])
    return weights


def combine_shares(subset: Mapping[int, bytes], t: int) -> bytes:
    """Reconstruct the secret from ``{point: share}``; only the first t points are used."""
    if len(subset) < t:
        raise ReconstructionRefused(f"{len(subset)} shares given, {t} required")
    points = sorted(subset)[:t]
    if any(not 1 <= p <= 255 for p in points):
        raise ValueError("share points must lie in 1..255")
    lengths = {len(subset[p]) for p in points}
    if len(lengths) != 1:
        raise ValueError("shares differ in length")
    out = np.zeros(lengths.pop(), dtype=np.uint8)
    for p, w in lagrange_at_zero(points).items():
        out ^= GF256_MUL[w, np.frombuffer(subset[p], dtype=np.uint8)]
    return out.tobytes()


def candidate_secrets(subset: Mapping[int, bytes], t: int):
    """Yield the reconstruction of every t-subset of the given shares."""
    for points in itertools.combinations(sorted(subset), t):
        yield points, combine_shares({p: subset[p] for p in points}, t)
