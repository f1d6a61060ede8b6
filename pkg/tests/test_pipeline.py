import numpy as np
import pytest

from ailock.core import DimensionError, ParamSet
from ailock.evaluation import fit_selectors
from ailock.pipeline import (ImageTooSmallError, PipelineModel, auth_image, enroll_image, make_print, make_prints_many,
                             segment_rects)
from ailock.providers import ArrayProvider


def test_five_segments_of_300():
    g = segment_rects(300, 300, 5)
    assert [(r.x, r.y, r.width, r.height) for r in g.rects] == [
        (0, 0, 200, 200), (0, 100, 200, 200), (100, 0, 200, 200), (100, 100, 200, 200), (50, 50, 200, 200)]


def test_single_segment_is_full_frame():
    (r,) = segment_rects(300, 300, 1).rects
    assert (r.x, r.y, r.width, r.height) == (0, 0, 300, 300)


@pytest.mark.parametrize("w,h", [(300, 300), (640, 480), (121, 333)])
def test_segments_inside_frame_and_seams_overlap(w, h):
    g = segment_rects(w, h, 5)
    cover = np.zeros((h, w), dtype=int)
    for r in g.rects:
        assert r.x >= 0 and r.y >= 0 and r.x + r.width <= w and r.y + r.height <= h
        cover[r.y:r.y + r.height, r.x:r.x + r.width] += 1
    assert cover.min() >= 1
    # pixels along the quadrant seams are covered at least twice
    assert cover[:, w // 2 - 1:w // 2 + 1].min() >= 2
    assert cover[h // 2 - 1:h // 2 + 1, :].min() >= 2
    # the center crop adds margin/2 on each side of the central half
    c = g.rects[4]
    assert (c.x, c.y) == (w // 4 - 25, h // 4 - 25)


def test_too_small_image():
    with pytest.raises(ImageTooSmallError):
        segment_rects(100, 300, 5)


def _model(synth, variant, lam=64, seed=3):
    provider, corpus = synth
    params = ParamSet.for_variant(variant, lam, 0.7)
    sel = fit_selectors(provider, corpus.split("train").ids, params)
    return PipelineModel(params, sel, seed, (0.7,) * params.s)


@pytest.mark.parametrize("variant,n", [("slss", 1), ("mlss", 2), ("slms", 5), ("mlms", 10)])
def test_print_counts(synth, variant, n):
    m = _model(synth, variant)
    prints = make_print(m, synth[0], "o0c0")
    assert len(prints) == n and all(p.length == 64 for p in prints)
    assert prints == make_print(m, synth[0], "o0c0")


def test_mlms_layer0_equals_slms(synth):
    provider, corpus = synth
    ids = corpus.split("holdout").ids[:10]
    mlms, slms = _model(synth, "mlms"), _model(synth, "slms")
    a = make_prints_many(mlms, provider, ids).reshape(len(ids), 5, 2, 64)[:, :, 0, :]
    b = make_prints_many(slms, provider, ids).reshape(len(ids), 5, 64)
    assert np.array_equal(a, b)


def test_model_persistence_is_bit_identical(synth, tmp_path):
    m = _model(synth, "mlms").with_taus([0.7, 0.71, 0.72, 0.73, 0.74])
    m.save(tmp_path / "m.json")
    again = PipelineModel.load(tmp_path / "m.json")
    assert again.to_json() == m.to_json()
    ids = synth[1].ids[:20]
    assert np.array_equal(make_prints_many(again, synth[0], ids), make_prints_many(m, synth[0], ids))


def test_model_rejects_tampered_seed(synth):
    import json

    doc = json.loads(_model(synth, "slss").to_json())
    doc["lsh"][0]["seed"] += 1
    with pytest.raises(ValueError):
        PipelineModel.from_json(json.dumps(doc))


def test_enroll_auth_same_and_other_object(synth):
    provider, _ = synth
    m = PipelineModel(ParamSet(lam=255, tau=0.75), _model(synth, "slss", 255).selectors, 3, (0.75,))
    rec = enroll_image(m, provider, "o210c0", rng_seed=1)
    assert auth_image(m, provider, "o210c0", rec)
    assert auth_image(m, provider, "o210c1", rec)
    assert not auth_image(m, provider, "o211c0", rec)


def test_provider_dimension_mismatch(synth):
    m = _model(synth, "slss")
    small = ArrayProvider(["a"], np.ones((1, 1, 2, 10)))
    with pytest.raises(DimensionError):
        make_print(m, small, "a")
