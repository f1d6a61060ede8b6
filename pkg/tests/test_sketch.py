import math

import numpy as np
import pytest

from ailock.bch import CapacityInfeasibleError, encode
from ailock.core import DimensionError, Imageprint, ParamSet
from ailock.sketch import (EnrollmentRecord, RecordIntegrityError, authenticate, authenticate_many,
                           derive_locked_secret, enroll, secret_hash, segment_codes)


def random_prints(rng, params):
    return [Imageprint(rng.integers(0, 2, params.lam, dtype=np.uint8)) for _ in range(params.s * params.l)]


def flip(prints, rng, weights):
    out = []
    for p, w in zip(prints, weights):
        b = p.bits.copy()
        b[rng.choice(len(b), w, replace=False)] ^= 1
        out.append(Imageprint(b))
    return out


def test_zero_error_roundtrip(rng):
    p = ParamSet(lam=255, tau=0.85)
    prints = random_prints(rng, p)
    rec = enroll(prints, p, rng_seed=1)
    assert authenticate(rec, prints)
    assert rec.secret_bits == 47 and len(rec.ss2) == 32


def test_masked_word_is_a_codeword(rng):
    p = ParamSet(lam=255, tau=0.85)
    prints = random_prints(rng, p)
    rec = enroll(prints, p, rng_seed=3)
    code = rec.code_specs[0]
    word = rec.ss1[0].bits ^ prints[0].bits
    assert np.array_equal(encode(code, word[code.r:]), word)


def test_noise_up_to_capacity_accepts_beyond_rejects(rng):
    p = ParamSet(lam=255, tau=0.85)  # c = 38
    prints = random_prints(rng, p)
    rec = enroll(prints, p, rng_seed=4)
    for w in (1, 20, 38):
        assert authenticate(rec, flip(prints, rng, [w]))
    assert not authenticate(rec, [Imageprint(1 - prints[0].bits)])
    assert not authenticate(rec, flip(prints, rng, [39]))


def test_multi_segment_threshold_boundary(rng):
    p = ParamSet.for_variant("mlms", 63, 0.9)  # segment length 126, c = 12, t = 3
    prints = random_prints(rng, p)
    rec = enroll(prints, p, rng_seed=5)
    assert rec.share_scheme == (3, 5)
    c = rec.code_specs[0].c

    def noisy(good):
        # layer prints of segment i carry c errors in total when good, far more otherwise
        ws = []
        for i in range(p.s):
            w = c if i in good else 50
            ws += [w // 2, w - w // 2]
        return flip(prints, rng, ws)

    assert authenticate(rec, noisy({0, 2, 4}))
    assert authenticate(rec, noisy({0, 1, 2, 3, 4}))
    assert not authenticate(rec, noisy({1, 3}))
    assert not authenticate(rec, [Imageprint(1 - x.bits) for x in prints])


def test_authenticate_many_matches_single(rng):
    p = ParamSet.for_variant("slms", 63, 0.85)
    prints = random_prints(rng, p)
    rec = enroll(prints, p, rng_seed=6)
    cands = [flip(prints, rng, [int(rng.integers(0, 20)) for _ in range(5)]) for _ in range(40)]
    rows = np.array([np.concatenate([x.bits for x in c]) for c in cands])
    assert authenticate_many(rec, rows).tolist() == [authenticate(rec, c) for c in cands]


def test_record_json_roundtrip_is_byte_exact(rng):
    p = ParamSet.for_variant("mlms", 63, 0.9)
    rec = enroll(random_prints(rng, p), p, rng_seed=7, secondary=b"pin")
    text = rec.to_json()
    again = EnrollmentRecord.from_json(text)
    assert again.to_json() == text
    assert list(__import__("json").loads(text)) == ["format", "params", "taus", "share_scheme", "secret_bits", "salt",
                                                    "code_specs", "ss1", "ss2"]


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("ss2"),
    lambda d: d.update(format="other"),
    lambda d: d["ss1"].pop(),
    lambda d: d.update(secret_bits=10_000),
    lambda d: d["code_specs"][0].update(c=3),
    lambda d: d.update(ss2="!!"),
])
def test_corrupted_records_raise(mutate, rng):
    import json

    p = ParamSet(lam=63, tau=0.9)
    doc = json.loads(enroll(random_prints(rng, p), p, rng_seed=8).to_json())
    mutate(doc)
    with pytest.raises(RecordIntegrityError):
        EnrollmentRecord.from_json(json.dumps(doc))


def test_record_holds_no_plain_print(rng):
    p = ParamSet(lam=255, tau=0.85)
    prints = random_prints(rng, p)
    rec = enroll(prints, p, rng_seed=9)
    assert rec.ss1[0] != prints[0]
    assert prints[0].packed() not in rec.to_json().encode()


def test_ss1_looks_uniform():
    # a fixed print masked by codewords of fresh secrets: monobit and serial tests at alpha = 0.01
    p = ParamSet(lam=255, tau=0.85)
    fixed = [Imageprint(np.zeros(255, np.uint8))]
    bits = np.concatenate([enroll(fixed, p, rng_seed=s).ss1[0].bits for s in range(200)]).astype(int)
    n = len(bits)
    z = abs(bits.sum() - n / 2) / math.sqrt(n / 4)
    assert z < 2.576
    pairs = bits[:-1] * 2 + bits[1:]
    counts = np.bincount(pairs, minlength=4)
    chi2 = ((counts - (n - 1) / 4) ** 2 / ((n - 1) / 4)).sum()
    assert chi2 < 11.34  # chi-square(3) at 0.01


def test_two_factor(rng):
    p = ParamSet(lam=255, tau=0.85)
    prints = random_prints(rng, p)
    rec = enroll(prints, p, rng_seed=10, secondary=b"correct horse")
    assert rec.salt is not None
    assert authenticate(rec, prints, secondary=b"correct horse")
    assert not authenticate(rec, prints, secondary=b"wrong")
    assert not authenticate(rec, prints)


def test_locked_secret_derivation():
    a = derive_locked_secret(b"pw", b"s" * 16, 100)
    assert np.array_equal(a, derive_locked_secret(b"pw", b"s" * 16, 100))
    assert not np.array_equal(a, derive_locked_secret(b"pw", b"t" * 16, 100))
    with pytest.raises(ValueError):
        derive_locked_secret(b"pw", b"s" * 16, 100, max_bits=64)


def test_hash_is_domain_and_length_separated():
    assert secret_hash(np.zeros(8, np.uint8)) != secret_hash(np.zeros(16, np.uint8))


def test_shape_errors(rng):
    p = ParamSet.for_variant("mlss", 63, 0.9)
    with pytest.raises(DimensionError):
        enroll(random_prints(rng, p)[:1], p)
    with pytest.raises(CapacityInfeasibleError):
        segment_codes(ParamSet(lam=500, tau=0.682), [0.682])
