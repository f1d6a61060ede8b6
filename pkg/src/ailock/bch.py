"""Shortened binary BCH codes with bounded-distance decoding.

Codeword bit i is the coefficient of x**i. Parity occupies positions ``0..r-1`` and
the message positions ``r..n-1`` (systematic). A primitive code of length
``2**m - 1`` is shortened to ``n`` by pinning its top message bits to zero.

The decoder corrects exactly the patterns of weight <= c: Berlekamp-Massey on the
first 2c syndromes, Chien search restricted to the ``n`` live positions, and a
final syndrome re-check. Anything else is reported as a failure, even when the
underlying code could correct more (its true capacity may exceed the designed c).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numba
import numpy as np

from .core import DimensionError

# x**m + ... as integers, lowest-weight primitive polynomials
PRIMITIVE_POLYS = {
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0b100011101,
    9: 0b1000010001,
    10: 0b10000001001,
    11: 0b100000000101,
    12: 0b1000001010011,
    13: 0b10000000011011,
    14: 0b100010001000011,
    15: 0b1000000000000011,
    16: 0b10001000000001011,
}


class CapacityInfeasibleError(ValueError):
    def __init__(self, lam: int, c: int, max_c: int):
        super().__init__(
            f"no shortened BCH code of length {lam} corrects {c} errors with k >= 1; "
            f"largest feasible capacity is {max_c}"
        )
        self.lam = lam
        self.c = c
        self.max_c = max_c


@lru_cache(maxsize=None)
def gf_tables(m: int) -> tuple[np.ndarray, np.ndarray]:
    """exp (length 2*(2**m-1)) and log tables of GF(2**m)."""
    poly = PRIMITIVE_POLYS[m]
    n0 = (1 << m) - 1
    exp = np.zeros(2 * n0, dtype=np.int64)
    log = np.full(1 << m, -1, dtype=np.int64)
    x = 1
    for i in range(n0):
        if log[x] != -1:
            raise ValueError(f"polynomial {poly:#x} is not primitive for m={m}")
        exp[i] = x
        log[x] = i
        x <<= 1
        if x >> m:
            x ^= poly
    exp[n0:] = exp[:n0]
    exp.setflags(write=False)
    log.setflags(write=False)
    return exp, log


def _cosets(m: int) -> list[list[int]]:
    n0 = (1 << m) - 1
    seen = set()
    out = []
    for i in range(1, n0):
        if i in seen:
            continue
        coset = []
        j = i
        while j not in coset:
            coset.append(j)
            j = (2 * j) % n0
        seen.update(coset)
        out.append(coset)
    return out


def _minimal_poly(coset: list[int], m: int) -> int:
    exp, log = gf_tables(m)
    # coefficients over GF(2**m), lowest degree first
    coef = [1]
    for j in coset:
        root = int(exp[j])
        nxt = [0] * (len(coef) + 1)
        for i, a in enumerate(coef):
            nxt[i + 1] ^= a
            if a:
                nxt[i] ^= int(exp[log[a] + log[root]])
        coef = nxt
    out = 0
    for i, a in enumerate(coef):
        if a not in (0, 1):
            raise AssertionError("minimal polynomial has non-binary coefficient")
        out |= a << i
    return out


def _clmul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


@lru_cache(maxsize=None)
def generator_poly(m: int, c: int) -> int:
    """LCM of the minimal polynomials of alpha**1 .. alpha**(2c)."""
    g = 1
    for coset in _cosets(m):
        if min(coset) <= 2 * c:
            g = _clmul(g, _minimal_poly(coset, m))
    return g


def field_degree(lam: int) -> int:
    m = 3
    while (1 << m) - 1 < lam:
        m += 1
    if m not in PRIMITIVE_POLYS:
        raise ValueError(f"length {lam} needs GF(2^{m}), beyond the supported table")
    return m


def max_capacity(lam: int) -> int:
    """Largest c for which ``design_code(lam, c)`` succeeds."""
    m = field_degree(lam)
    best = 0
    c = 1
    while 2 * c < (1 << m) - 1:
        if lam - (generator_poly(m, c).bit_length() - 1) >= 1:
            best = c
        else:
            break
        c += 1
    return best


@dataclass(frozen=True)
class BchCodeSpec:
    m: int
    n: int
    k: int
    c: int
    generator: int

    def __post_init__(self):
        if self.n > (1 << self.m) - 1:
            raise ValueError("shortened length exceeds the primitive length")
        if self.k < 1 or self.n - self.k != self.generator.bit_length() - 1:
            raise ValueError("inconsistent code parameters")

    @property
    def r(self) -> int:
        return self.n - self.k

    @cached_property
    def parity_matrix(self) -> np.ndarray:
        """Row i is the parity of the unit message with bit i set."""
        r = self.r
        g = self.generator
        rows = np.zeros((self.k, r), dtype=np.uint8)
        rem = g ^ (1 << r)  # x**r mod g
        for i in range(self.k):
            for j in range(r):
                rows[i, j] = (rem >> j) & 1
            rem <<= 1
            if (rem >> r) & 1:
                rem ^= g
        rows.setflags(write=False)
        return rows

    def to_dict(self) -> dict:
        return {"m": self.m, "n": self.n, "k": self.k, "c": self.c, "generator": format(self.generator, "x")}

    @classmethod
    def from_dict(cls, d: dict) -> "BchCodeSpec":
        spec = cls(m=int(d["m"]), n=int(d["n"]), k=int(d["k"]), c=int(d["c"]), generator=int(d["generator"], 16))
        if spec != design_code(spec.n, spec.c):
            raise ValueError("code parameters do not match the canonical design")
        return spec


@lru_cache(maxsize=None)
def design_code(lam: int, c: int) -> BchCodeSpec:
    if lam < 8:
        raise ValueError(f"code length must be >= 8, got {lam}")
    if c < 0:
        raise ValueError(f"capacity must be >= 0, got {c}")
    m = field_degree(lam)
    if c == 0:
        return BchCodeSpec(m=m, n=lam, k=lam, c=0, generator=1)
    if 2 * c >= (1 << m) - 1:
        raise CapacityInfeasibleError(lam, c, max_capacity(lam))
    g = generator_poly(m, c)
    k = lam - (g.bit_length() - 1)
    if k < 1:
        raise CapacityInfeasibleError(lam, c, max_capacity(lam))
    return BchCodeSpec(m=m, n=lam, k=k, c=c, generator=g)


def encode_many(spec: BchCodeSpec, msgs: np.ndarray) -> np.ndarray:
    msgs = np.asarray(msgs, dtype=np.uint8)
    if msgs.shape[-1] != spec.k:
        raise DimensionError(f"message length {msgs.shape[-1]} != k={spec.k}")
    if spec.r == 0:
        return msgs.copy()
    parity = (msgs.astype(np.int64) @ spec.parity_matrix.astype(np.int64)) & 1
    return np.concatenate([parity.astype(np.uint8), msgs], axis=-1)


def encode(spec: BchCodeSpec, msg) -> np.ndarray:
    msg = np.asarray(msg, dtype=np.uint8)
    if msg.ndim != 1:
        raise DimensionError("encode expects one message; use encode_many")
    return encode_many(spec, msg)


@numba.njit(cache=True, nogil=True)
def _syndromes(word, exp, n0, c, S):
    """Odd syndromes from the set positions, even ones by squaring (binary code)."""
    S[:] = 0
    for i in range(word.shape[0]):
        if word[i]:
            e = i
            step = (2 * i) % n0
            for j in range(1, 2 * c + 1, 2):
                S[j] ^= exp[e]
                e += step
                if e >= n0:
                    e -= n0
    nonzero = False
    for j in range(1, 2 * c + 1, 2):
        if S[j] != 0:
            nonzero = True
    return nonzero


@numba.njit(cache=True, nogil=True)
def _fill_even(S, exp, log, c):
    for j in range(2, 2 * c + 1, 2):
        h = S[j // 2]
        S[j] = 0 if h == 0 else exp[2 * log[h]]


@numba.njit(cache=True, nogil=True)
def _decode_kernel(words, exp, log, n0, c, out, ok):
    nw, lam = words.shape
    S = np.zeros(2 * c + 1, dtype=np.int64)
    E = np.zeros(2 * c + 1, dtype=np.int64)
    C = np.zeros(2 * c + 2, dtype=np.int64)
    B = np.zeros(2 * c + 2, dtype=np.int64)
    T = np.zeros(2 * c + 2, dtype=np.int64)
    terms = np.zeros(2 * c + 2, dtype=np.int64)
    steps = np.zeros(2 * c + 2, dtype=np.int64)
    flips = np.zeros(c + 1, dtype=np.int64)
    for w in range(nw):
        word = words[w]
        for i in range(lam):
            out[w, i] = word[i]
        if c == 0 or not _syndromes(word, exp, n0, c, S):
            ok[w] = True
            continue
        _fill_even(S, exp, log, c)
        # Berlekamp-Massey; degC/degB bound the polynomial loops
        C[:] = 0
        B[:] = 0
        C[0] = 1
        B[0] = 1
        degC = 0
        degB = 0
        L = 0
        shift = 1
        b = 1
        for step in range(2 * c):
            d = S[step + 1]
            for i in range(1, min(L, degC) + 1):
                ci = C[i]
                si = S[step + 1 - i]
                if ci != 0 and si != 0:
                    d ^= exp[log[ci] + log[si]]
            if d == 0:
                shift += 1
                continue
            lc = (log[d] - log[b]) % n0
            top = min(degB + shift, 2 * c + 1)
            if 2 * L <= step:
                for i in range(degC + 1):
                    T[i] = C[i]
                oldDegC = degC
                for i in range(top - shift + 1):
                    if B[i] != 0:
                        C[i + shift] ^= exp[lc + log[B[i]]]
                if top > degC:
                    degC = top
                L = step + 1 - L
                for i in range(max(degB, oldDegC) + 1):
                    B[i] = T[i] if i <= oldDegC else 0
                degB = oldDegC
                b = d
                shift = 1
            else:
                for i in range(top - shift + 1):
                    if B[i] != 0:
                        C[i + shift] ^= exp[lc + log[B[i]]]
                if top > degC:
                    degC = top
                shift += 1
        while degC > 0 and C[degC] == 0:
            degC -= 1
        if L > c or degC != L:
            ok[w] = False
            continue
        # Chien search: terms[kk] tracks log(C[kk] * alpha**(-i*kk))
        nterms = 0
        for kk in range(L + 1):
            if C[kk] != 0:
                terms[nterms] = log[C[kk]]
                steps[nterms] = kk
                nterms += 1
        roots = 0
        for i in range(lam):
            v = 0
            for q in range(nterms):
                v ^= exp[terms[q]]
                terms[q] -= steps[q]
                if terms[q] < 0:
                    terms[q] += n0
            if v == 0:
                if roots == L:
                    roots += 1
                    break
                flips[roots] = i
                roots += 1
        if roots != L:
            ok[w] = False
            continue
        # the flips must reproduce every odd syndrome exactly
        E[:] = 0
        for r in range(L):
            p = flips[r]
            out[w, p] ^= 1
            e = p
            st = (2 * p) % n0
            for j in range(1, 2 * c + 1, 2):
                E[j] ^= exp[e]
                e += st
                if e >= n0:
                    e -= n0
        good = True
        for j in range(1, 2 * c + 1, 2):
            if E[j] != S[j]:
                good = False
                break
        ok[w] = good


def decode_many(spec: BchCodeSpec, words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decode a batch of received words.

    Returns ``(messages, ok)``; rows where ``ok`` is False are decode failures and
    their message contents are meaningless.
    """
    words = np.ascontiguousarray(words, dtype=np.uint8)
    if words.ndim != 2 or words.shape[1] != spec.n:
        raise DimensionError(f"expected words of length {spec.n}")
    exp, log = gf_tables(spec.m)
    out = np.empty_like(words)
    ok = np.zeros(words.shape[0], dtype=np.bool_)
    _decode_kernel(words, exp, log, (1 << spec.m) - 1, spec.c, out, ok)
    return out[:, spec.r:], ok


def decode(spec: BchCodeSpec, word) -> np.ndarray | None:
    """Message for a word within distance c of a codeword, else None."""
    word = np.asarray(word, dtype=np.uint8)
    if word.ndim != 1:
        raise DimensionError("decode expects one word; use decode_many")
    msgs, ok = decode_many(spec, word[None, :])
    return msgs[0] if ok[0] else None
