"""Code-offset secure sketch over imageprints, with segment-level secret sharing.

Each segment's print (its layer prints concatenated, ``l * lam`` bits) masks one
BCH codeword. With one segment the codeword carries the secret x directly; with
several, segment i carries the i-th (t, s) share of x and any t segments that
decode can rebuild it. Only SHA-256 of x is stored next to the masked codewords.
"""
from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .bch import BchCodeSpec, decode_many, design_code, encode
from .core import DimensionError, Imageprint, ParamSet, correction_capacity, pack_bits, unpack_bits
from .sharing import candidate_secrets, make_rng, random_bytes, split_secret

RECORD_FORMAT = "ailock.record.v1"
SS2_DOMAIN = b"ailock.v1.ss2"
KDF_INFO = b"ailock.v1.locked-secret"
MAX_SECRET_BITS = 128
SALT_BYTES = 16


class RecordIntegrityError(ValueError):
    pass


def secret_hash(x_bits: np.ndarray) -> bytes:
    x_bits = np.asarray(x_bits, dtype=np.uint8)
    h = hashlib.sha256(SS2_DOMAIN)
    h.update(len(x_bits).to_bytes(2, "big"))
    h.update(pack_bits(x_bits))
    return h.digest()


def derive_locked_secret(secondary: bytes, salt: bytes, out_len_bits: int, max_bits: int | None = None) -> np.ndarray:
    """HKDF-SHA256 of a secondary secret (password, PIN) under ``salt``, as bits."""
    if out_len_bits < 1:
        raise ValueError("output length must be positive")
    if max_bits is not None and out_len_bits > max_bits:
        raise ValueError(f"{out_len_bits} bits requested, code carries at most {max_bits}")
    n_bytes = (out_len_bits + 7) // 8
    key = HKDF(algorithm=hashes.SHA256(), length=n_bytes, salt=salt, info=KDF_INFO).derive(bytes(secondary))
    return np.unpackbits(np.frombuffer(key, dtype=np.uint8), bitorder="little")[:out_len_bits]


def segment_codes(params: ParamSet, taus: Sequence[float]) -> tuple[BchCodeSpec, ...]:
    n = params.l * params.lam
    return tuple(design_code(n, correction_capacity(n, tau)) for tau in taus)


def secret_length(params: ParamSet, codes: Sequence[BchCodeSpec]) -> int:
    k = min(code.k for code in codes)
    if params.s == 1:
        return min(k, MAX_SECRET_BITS)
    # shares are whole bytes
    bits = min(8 * (k // 8), MAX_SECRET_BITS)
    if bits < 8:
        raise ValueError(f"segment codes carry only {k} bits, too few for a byte-wise share")
    return bits


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)


def params_to_dict(p: ParamSet) -> dict:
    return {"lambda": p.lam, "tau": p.tau, "pc_lo": p.pc_lo, "pc_hi": p.pc_hi,
            "s": p.s, "t": p.t, "l": p.l, "hash_len": p.hash_len}


def params_from_dict(d: dict) -> ParamSet:
    keys = {"lambda", "tau", "pc_lo", "pc_hi", "s", "t", "l", "hash_len"}
    if set(d) != keys:
        raise ValueError(f"parameter keys {sorted(d)} != {sorted(keys)}")
    return ParamSet(lam=int(d["lambda"]), tau=float(d["tau"]), pc_lo=int(d["pc_lo"]), pc_hi=int(d["pc_hi"]),
                    s=int(d["s"]), t=int(d["t"]), l=int(d["l"]), hash_len=int(d["hash_len"]))


@dataclass(frozen=True, eq=False)
class EnrollmentRecord:
    params: ParamSet
    taus: tuple[float, ...]
    code_specs: tuple[BchCodeSpec, ...]
    ss1: tuple[Imageprint, ...]  # s * l chunks of lam bits, segment-major
    ss2: bytes
    secret_bits: int
    salt: bytes | None = None

    @property
    def share_scheme(self) -> tuple[int, int] | None:
        return None if self.params.s == 1 else (self.params.t, self.params.s)

    def segment_mask(self, i: int) -> np.ndarray:
        l = self.params.l
        return np.concatenate([p.bits for p in self.ss1[i * l:(i + 1) * l]])

    def validate(self):
        p = self.params
        if len(self.taus) != p.s or len(self.code_specs) != p.s:
            raise RecordIntegrityError("per-segment entries do not match s")
        if len(self.ss1) != p.s * p.l or any(x.length != p.lam for x in self.ss1):
            raise RecordIntegrityError("masked codewords have the wrong shape")
        if len(self.ss2) * 8 != p.hash_len:
            raise RecordIntegrityError("verification hash has the wrong length")
        if segment_codes(p, self.taus) != self.code_specs:
            raise RecordIntegrityError("code parameters do not match the thresholds")
        if not 1 <= self.secret_bits <= min(c.k for c in self.code_specs):
            raise RecordIntegrityError("secret length exceeds code dimension")
        if p.s > 1 and self.secret_bits % 8:
            raise RecordIntegrityError("shared secret must be whole bytes")
        if self.salt is not None and len(self.salt) != SALT_BYTES:
            raise RecordIntegrityError("salt has the wrong length")

    def to_json(self) -> str:
        scheme = self.share_scheme
        doc = {
            "format": RECORD_FORMAT,
            "params": params_to_dict(self.params),
            "taus": list(self.taus),
            "share_scheme": None if scheme is None else {"t": scheme[0], "s": scheme[1]},
            "secret_bits": self.secret_bits,
            "salt": None if self.salt is None else _b64(self.salt),
            "code_specs": [c.to_dict() for c in self.code_specs],
            "ss1": [_b64(x.packed()) for x in self.ss1],
            "ss2": _b64(self.ss2),
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EnrollmentRecord":
        try:
            doc = json.loads(text)
            expected = ["format", "params", "taus", "share_scheme", "secret_bits", "salt", "code_specs", "ss1", "ss2"]
            if not isinstance(doc, dict) or list(doc) != expected:
                raise RecordIntegrityError("record fields missing, unknown or out of order")
            if doc["format"] != RECORD_FORMAT:
                raise RecordIntegrityError(f"unsupported record format {doc['format']!r}")
            params = params_from_dict(doc["params"])
            scheme = doc["share_scheme"]
            want = None if params.s == 1 else {"t": params.t, "s": params.s}
            if scheme != want:
                raise RecordIntegrityError("share scheme does not match parameters")
            rec = cls(
                params=params,
                taus=tuple(float(t) for t in doc["taus"]),
                code_specs=tuple(BchCodeSpec.from_dict(c) for c in doc["code_specs"]),
                ss1=tuple(Imageprint.from_packed(_unb64(x), params.lam) for x in doc["ss1"]),
                ss2=_unb64(doc["ss2"]),
                secret_bits=int(doc["secret_bits"]),
                salt=None if doc["salt"] is None else _unb64(doc["salt"]),
            )
            rec.validate()
        except RecordIntegrityError:
            raise
        except (ValueError, TypeError, KeyError, AttributeError) as exc:
            raise RecordIntegrityError(f"malformed record: {exc}") from exc
        return rec


def _segment_prints(prints: Sequence[Imageprint], params: ParamSet) -> list[np.ndarray]:
    if len(prints) != params.s * params.l:
        raise DimensionError(f"expected {params.s * params.l} prints, got {len(prints)}")
    if any(p.length != params.lam for p in prints):
        raise DimensionError(f"every print must have {params.lam} bits")
    l = params.l
    return [np.concatenate([p.bits for p in prints[i * l:(i + 1) * l]]) for i in range(params.s)]


def enroll(prints: Sequence[Imageprint], params: ParamSet, rng_seed: int | None = None,
           taus: Sequence[float] | None = None, secondary: bytes | None = None) -> EnrollmentRecord:
    """Lock a fresh random secret (or one derived from ``secondary``) under the prints."""
    taus = tuple(float(t) for t in (taus if taus is not None else [params.tau] * params.s))
    if len(taus) != params.s:
        raise ValueError(f"need {params.s} thresholds, got {len(taus)}")
    segs = _segment_prints(prints, params)
    codes = segment_codes(params, taus)
    nbits = secret_length(params, codes)
    rng = make_rng(rng_seed)

    salt = None
    if secondary is not None:
        salt = random_bytes(rng, SALT_BYTES)
        x = derive_locked_secret(secondary, salt, nbits)
    else:
        x = np.unpackbits(np.frombuffer(random_bytes(rng, (nbits + 7) // 8), dtype=np.uint8),
                          bitorder="little")[:nbits]

    if params.s == 1:
        payloads = [x]
    else:
        shares = split_secret(pack_bits(x), params.t, params.s, rng)
        payloads = [unpack_bits(sh, nbits) for sh in shares.shares]

    ss1 = []
    for seg, code, payload in zip(segs, codes, payloads):
        msg = np.zeros(code.k, dtype=np.uint8)
        msg[:nbits] = payload
        masked = seg ^ encode(code, msg)
        ss1.extend(Imageprint(chunk) for chunk in masked.reshape(params.l, params.lam))

    return EnrollmentRecord(params=params, taus=taus, code_specs=codes, ss1=tuple(ss1),
                            ss2=secret_hash(x), secret_bits=nbits, salt=salt)


def _recover(record: EnrollmentRecord, seg_bits: Sequence[np.ndarray]) -> list[list[tuple[int, np.ndarray]]]:
    """Per candidate, the (point, payload) pairs of every segment that decoded cleanly."""
    nbits = record.secret_bits
    n_cand = seg_bits[0].shape[0]
    found = [[] for _ in range(n_cand)]
    for i, (code, bits) in enumerate(zip(record.code_specs, seg_bits)):
        msgs, ok = decode_many(code, bits ^ record.segment_mask(i))
        # payload padding must come back as zeros, otherwise the word left the decoding ball
        ok &= ~msgs[:, nbits:].any(axis=1)
        for j in np.flatnonzero(ok):
            found[j].append((i + 1, msgs[j, :nbits]))
    return found


def _accepts(record: EnrollmentRecord, recovered: list[tuple[int, np.ndarray]], locked: np.ndarray | None) -> bool:
    p = record.params
    if len(recovered) < p.t:
        return False
    if p.s == 1:
        candidates = [recovered[0][1]]
    else:
        shares = {pt: pack_bits(bits) for pt, bits in recovered}
        candidates = [unpack_bits(x, record.secret_bits) for _, x in candidate_secrets(shares, p.t)]
    for x in candidates:
        if secret_hash(x) == record.ss2 and (locked is None or np.array_equal(x, locked)):
            return True
    return False


def _locked(record: EnrollmentRecord, secondary: bytes | None) -> np.ndarray | None:
    if record.salt is None:
        return None
    if secondary is None:
        return np.zeros(0, dtype=np.uint8)  # cannot match any secret
    return derive_locked_secret(secondary, record.salt, record.secret_bits)


def authenticate(record: EnrollmentRecord, prints: Sequence[Imageprint], secondary: bytes | None = None) -> bool:
    segs = _segment_prints(prints, record.params)
    found = _recover(record, [s[None, :] for s in segs])
    return _accepts(record, found[0], _locked(record, secondary))


def authenticate_many(record: EnrollmentRecord, candidates: np.ndarray, secondary: bytes | None = None) -> np.ndarray:
    """Vectorised ``authenticate`` over rows of full concatenated prints (``s*l*lam`` bits)."""
    p = record.params
    candidates = np.asarray(candidates, dtype=np.uint8)
    if candidates.ndim != 2 or candidates.shape[1] != p.total_bits:
        raise DimensionError(f"candidates must have {p.total_bits} bits per row")
    width = p.l * p.lam
    seg_bits = [candidates[:, i * width:(i + 1) * width] for i in range(p.s)]
    found = _recover(record, seg_bits)
    locked = _locked(record, secondary)
    return np.array([_accepts(record, f, locked) for f in found], dtype=bool)
