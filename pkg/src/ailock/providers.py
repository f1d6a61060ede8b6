"""Embedding sources: a seeded synthetic object model and a binary embedding file."""
from __future__ import annotations

import csv
import struct
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import DimensionError, Embedding

EMB_MAGIC = b"AILKEMB1"
ID_BYTES = 16


@dataclass(frozen=True)
class CorpusItem:
    id: str
    object_id: str
    split: str
    object_type: str = ""


@dataclass(frozen=True)
class Corpus:
    items: tuple[CorpusItem, ...]

    def __post_init__(self):
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate item ids in corpus")

    def __len__(self):
        return len(self.items)

    @property
    def ids(self) -> list[str]:
        return [it.id for it in self.items]

    def split(self, *names: str) -> "Corpus":
        return Corpus(tuple(it for it in self.items if it.split in names))

    def objects(self) -> list[str]:
        return sorted({it.object_id for it in self.items})

    def by_objects(self, object_ids: Iterable[str]) -> "Corpus":
        keep = set(object_ids)
        return Corpus(tuple(it for it in self.items if it.object_id in keep))


def write_manifest(path, corpus: Corpus) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "object_id", "split", "object_type"])
        for it in corpus.items:
            w.writerow([it.id, it.object_id, it.split, it.object_type])


def read_manifest(path) -> Corpus:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"manifest {path} has no rows")
    missing = {"id", "object_id", "split"} - set(rows[0])
    if missing:
        raise ValueError(f"manifest {path} lacks columns {sorted(missing)}")
    return Corpus(tuple(CorpusItem(r["id"], r["object_id"], r["split"], r.get("object_type") or "") for r in rows))


# ---------------------------------------------------------------------------
# Synthetic object model


def collision_to_sigma(target: float, signal_dims: int) -> float:
    """Capture-noise scale giving per-bit collision ``target`` between two captures.

    A unit base spread over ``signal_dims`` directions has per-direction variance
    1/signal_dims, so in any band of those directions two captures meet at
    cos(theta) = (1/d) / (1/d + sigma**2); solve for theta = pi * (1 - target).
    """
    if not 0.5 < target < 1.0:
        raise ValueError("target collision must lie in (0.5, 1)")
    cos = np.cos(np.pi * (1.0 - target))
    return float(np.sqrt((1.0 / cos - 1.0) / signal_dims))


@dataclass
class SyntheticObjectModel:
    """Seeded stand-in for DNN embeddings of photographed objects.

    Per layer, a random rotation splits the embedding space into a nuisance block
    (capture conditions: large, shared by all segments of one photo, unrelated to
    the object) and an object block. Each object owns a unit base vector in the
    object block, pulled toward its type centroid; each segment perturbs that base.
    A capture adds isotropic Gaussian noise and the nuisance term, then is scaled
    to unit norm. Items with split ``ds1``/``ds2`` are generated look-alikes of
    random real objects (the image-generator attack sets).
    """

    e: int = 256
    n_layers: int = 2
    n_segments: int = 5
    noise_sigma: float = 0.035
    nuisance_dims: int = 32
    nuisance_scale: float = 2.0
    n_types: int = 10
    type_weight: float = 0.3
    segment_mix: float = 0.5
    attack_spread: float = 0.9
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    concurrency_safe = True

    @property
    def dim(self) -> int:
        return self.e

    @property
    def signal_dims(self) -> int:
        return self.e - self.nuisance_dims

    @classmethod
    def calibrated(cls, target_collision: float = 0.79, **kw) -> "SyntheticObjectModel":
        e = kw.get("e", cls.e)
        h = kw.get("nuisance_dims", cls.nuisance_dims)
        return cls(noise_sigma=collision_to_sigma(target_collision, e - h), **kw)

    def _rng(self, *tag: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, *tag])))

    def _basis(self, layer: int) -> np.ndarray:
        key = ("basis", layer)
        if key not in self._cache:
            g = self._rng(1, layer).standard_normal((self.e, self.e))
            q, r = np.linalg.qr(g)
            self._cache[key] = q * np.sign(np.diag(r))
        return self._cache[key]

    def _object_dir(self, vec: np.ndarray, layer: int) -> np.ndarray:
        return self._basis(layer)[:, self.nuisance_dims:] @ vec

    def _unit_object(self, layer: int, *tag: int) -> np.ndarray:
        z = self._rng(*tag).standard_normal(self.signal_dims)
        return z / np.linalg.norm(z)

    def object_base(self, obj: int, layer: int, segment: int | None) -> np.ndarray:
        key = ("base", obj, layer, segment)
        if key in self._cache:
            return self._cache[key]
        if segment is None:
            t = obj % self.n_types
            centroid = self._unit_object(layer, 2, layer, t)
            own = self._unit_object(layer, 3, layer, obj)
            z = self.type_weight * centroid + own
        else:
            z = self.object_base_coords(obj, layer) + self.segment_mix * self._unit_object(layer, 4, layer, obj, segment)
        z = z / np.linalg.norm(z)
        self._cache[("coords", obj, layer, segment)] = z
        base = self._object_dir(z, layer)
        self._cache[key] = base
        return base

    def object_base_coords(self, obj: int, layer: int) -> np.ndarray:
        self.object_base(obj, layer, None)
        return self._cache[("coords", obj, layer, None)]

    def _generated_base(self, gen: int, layer: int, segment: int | None, n_real: int) -> np.ndarray:
        # look-alike of a random real object, as an image generator trained on them would produce
        rng = self._rng(5, gen)
        src = int(rng.integers(n_real))
        z = self.object_base_coords(src, layer) + self.attack_spread * self._unit_object(layer, 6, layer, gen)
        if segment is not None:
            z = z + self.segment_mix * self._unit_object(layer, 7, layer, gen, segment)
        z = z / np.linalg.norm(z)
        return self._object_dir(z, layer)

    def capture(self, base: np.ndarray, layer: int, *tag: int) -> np.ndarray:
        nuis_rng = self._rng(8, layer, *tag)
        nuisance = self._basis(layer)[:, :self.nuisance_dims] @ nuis_rng.standard_normal(self.nuisance_dims)
        v = base + self.nuisance_scale * nuisance / np.sqrt(self.nuisance_dims)
        return v


class SyntheticProvider:
    """Serves a :class:`SyntheticObjectModel` corpus by item id."""

    concurrency_safe = True

    def __init__(self, model: SyntheticObjectModel, corpus: Corpus, n_real_objects: int):
        self.model = model
        self.corpus = corpus
        self.n_real_objects = n_real_objects
        self.n_segments = model.n_segments
        self.n_layers = model.n_layers
        self.dim = model.e
        self._index = {}
        for it in corpus.items:
            kind, num, cap = _parse_id(it.id)
            self._index[it.id] = (kind, num, cap)

    def embed_many(self, ids: Sequence[str], segment: int | None, layer: int) -> np.ndarray:
        if layer >= self.n_layers:
            raise DimensionError(f"layer {layer} out of range")
        if segment is not None and not 0 <= segment < self.n_segments:
            raise DimensionError(f"segment {segment} out of range")
        m = self.model
        out = np.empty((len(ids), m.e))
        for row, item_id in enumerate(ids):
            try:
                kind, num, cap = self._index[item_id]
            except KeyError:
                raise KeyError(f"unknown item id {item_id!r}") from None
            if kind == "o":
                base = m.object_base(num, layer, segment)
                tag = (0, num, cap)
            else:
                base = m._generated_base(num, layer, segment, self.n_real_objects)
                tag = (1, num, cap)
            v = m.capture(base, layer, *tag)
            seg_tag = 0 if segment is None else segment + 1
            noise = m._rng(9, layer, seg_tag, *tag).standard_normal(m.e)
            v = v + m.noise_sigma * noise
            out[row] = v / np.linalg.norm(v)
        return out

    def embed(self, item_id: str, segment: int | None, layer: int) -> Embedding:
        return Embedding(self.embed_many([item_id], segment, layer)[0], source_tag=f"synthetic/layer{layer}")


def _parse_id(item_id: str) -> tuple[str, int, int]:
    # o<object>c<capture> for real objects, g<number>c0 for generated images
    kind = item_id[0]
    try:
        num, cap = item_id[1:].split("c")
        return kind, int(num), int(cap)
    except ValueError:
        raise ValueError(f"not a synthetic item id: {item_id!r}") from None


def _real_items(n_objects: int, captures: int, holdout_objects: int, n_types: int) -> list[CorpusItem]:
    items = []
    for obj in range(n_objects):
        split = "holdout" if obj >= n_objects - holdout_objects else "train"
        for cap in range(captures):
            items.append(CorpusItem(f"o{obj}c{cap}", f"obj{obj}", split, f"type{obj % n_types}"))
    return items


@lru_cache(maxsize=64)
def _calibrate(target, e, n_objects, captures, holdout_objects, seed, pc_lo, pc_hi, kw) -> float:
    from .features import fit_pca
    from .lsh import expected_collision_many

    kw = dict(kw)
    corpus = Corpus(tuple(_real_items(n_objects, captures, holdout_objects, kw.get("n_types", 10))))
    train, held = corpus.split("train"), corpus.split("holdout")
    labels = np.array([it.object_id for it in held.items])
    iu = np.triu_indices(len(labels), 1)
    same = labels[iu[0]] == labels[iu[1]]

    def mean_valid_collision(sigma):
        prov = SyntheticProvider(SyntheticObjectModel(e=e, noise_sigma=sigma, seed=seed, **kw), corpus, n_objects)
        pca = fit_pca(prov.embed_many(train.ids, None, 0), pc_lo, pc_hi)
        V = pca.project_many(prov.embed_many(held.ids, None, 0))
        return float(expected_collision_many(V[iu[0][same]], V[iu[1][same]]).mean())

    ceiling = mean_valid_collision(0.0)
    if ceiling <= target:
        raise ValueError(f"collision {target} is out of reach for this corpus: noise-free captures "
                         f"only reach {ceiling:.4f} (more training objects leak less nuisance into the band)")
    lo, hi = 0.0, 2 * collision_to_sigma(target, e - kw.get("nuisance_dims", SyntheticObjectModel.nuisance_dims))
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        if mean_valid_collision(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_noise(target: float, e: int = 256, n_objects: int = 255, captures: int = 4, holdout_objects: int = 55,
                    seed: int = 0, pc_lo: int = 32, pc_hi: int = 96, **model_kw) -> float:
    """Bisect the capture noise until held-out same-object pairs reach ``target``.

    The target is the mean analytic collision 1 - theta/pi of the PCA-band vectors of
    layer 0, with PCA fit on the training objects. The closed form
    :func:`collision_to_sigma` ignores the nuisance that sample PCA leaks into the band.
    """
    return _calibrate(target, e, n_objects, captures, holdout_objects, seed, pc_lo, pc_hi,
                      tuple(sorted(model_kw.items())))


def synth_object_provider(e: int = 256, n_objects: int = 255, captures_per_object: int = 4,
                          noise_sigma: float | None = None, seed: int = 0, holdout_objects: int = 55,
                          n_generated: int = 0, target_collision: float = 0.79,
                          **model_kw) -> tuple[SyntheticProvider, Corpus]:
    """Synthetic provider plus a labelled corpus.

    The last ``holdout_objects`` objects form the ``holdout`` split, the rest
    ``train``. ``n_generated`` look-alike images are split evenly into ``ds1`` (attack)
    and ``ds2`` (vaccine). ``noise_sigma=None`` calibrates the capture noise to
    ``target_collision``.
    """
    if noise_sigma is None:
        noise_sigma = calibrate_noise(target_collision, e=e, n_objects=n_objects, captures=captures_per_object,
                                      holdout_objects=holdout_objects, seed=seed, **model_kw)
    model = SyntheticObjectModel(e=e, noise_sigma=noise_sigma, seed=seed, **model_kw)
    items = _real_items(n_objects, captures_per_object, holdout_objects, model.n_types)
    for gen in range(n_generated):
        split = "ds1" if gen % 2 == 0 else "ds2"
        items.append(CorpusItem(f"g{gen}c0", f"gen{gen}", split, "generated"))
    corpus = Corpus(tuple(items))
    return SyntheticProvider(model, corpus, n_objects), corpus


# ---------------------------------------------------------------------------
# Embedding file: magic, u32 (records, e, s, l), then per record a 16-byte id and
# s*l vectors of e float32, all little-endian.


def write_embedding_file(path, ids: Sequence[str], vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors)
    if vectors.ndim != 4 or vectors.shape[0] != len(ids):
        raise DimensionError("vectors must have shape (records, s, l, e)")
    n, s, l, e = vectors.shape
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<4I", n, e, s, l))
        for item_id, block in zip(ids, vectors):
            raw = item_id.encode("utf-8")
            if len(raw) > ID_BYTES or b"\0" in raw:
                raise ValueError(f"id {item_id!r} does not fit in {ID_BYTES} bytes")
            fh.write(raw.ljust(ID_BYTES, b"\0"))
            fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())


def read_embedding_file(path) -> tuple[list[str], np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != EMB_MAGIC:
        raise ValueError(f"{path}: bad magic")
    if len(data) < 24:
        raise ValueError(f"{path}: truncated header")
    n, e, s, l = struct.unpack_from("<4I", data, 8)
    rec = ID_BYTES + 4 * s * l * e
    if len(data) != 24 + n * rec:
        raise ValueError(f"{path}: expected {24 + n * rec} bytes, found {len(data)}")
    ids = []
    vecs = np.empty((n, s, l, e), dtype=np.float32)
    for i in range(n):
        off = 24 + i * rec
        ids.append(data[off:off + ID_BYTES].rstrip(b"\0").decode("utf-8"))
        vecs[i] = np.frombuffer(data, dtype="<f4", count=s * l * e, offset=off + ID_BYTES).reshape(s, l, e)
    if len(set(ids)) != n:
        raise ValueError(f"{path}: duplicate ids")
    return ids, vecs


class ArrayProvider:
    """Embeddings held in memory as ``(records, s, l, e)``.

    With more than one segment, whole-image vectors come from ``whole`` (shape
    ``(records, l, e)``, same id order); without it there are none and PCA fitting
    pools the segment vectors.
    """

    concurrency_safe = True

    def __init__(self, ids: Sequence[str], vectors: np.ndarray, whole: np.ndarray | None = None,
                 whole_ids: Sequence[str] | None = None):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 4 or vectors.shape[0] != len(ids):
            raise DimensionError("vectors must have shape (records, s, l, e)")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids")
        self._row = {item_id: i for i, item_id in enumerate(ids)}
        self._vecs = vectors
        _, self.n_segments, self.n_layers, self.dim = vectors.shape
        self._whole = None
        if whole is not None:
            whole = np.asarray(whole, dtype=np.float64)
            wids = list(ids) if whole_ids is None else list(whole_ids)
            if whole.shape[1:] != (self.n_layers, self.dim) or whole.shape[0] != len(wids):
                raise DimensionError("whole-image vectors must have shape (records, l, e) matching the segments")
            self._whole = ({item_id: i for i, item_id in enumerate(wids)}, whole)
        elif self.n_segments == 1:
            self._whole = (self._row, vectors[:, 0])

    @property
    def has_whole(self) -> bool:
        return self._whole is not None

    def embed_many(self, ids: Sequence[str], segment: int | None, layer: int) -> np.ndarray:
        if not 0 <= layer < self.n_layers:
            raise DimensionError(f"layer {layer} out of range")
        if segment is None:
            if self._whole is None:
                raise KeyError("no whole-image embeddings available (single-segment models need a whole-image file)")
            rows, vecs = self._whole
        else:
            if not 0 <= segment < self.n_segments:
                raise DimensionError(f"segment {segment} out of range")
            rows, vecs = self._row, self._vecs[:, segment]
        try:
            idx = [rows[i] for i in ids]
        except KeyError as exc:
            raise KeyError(f"unknown item id {exc.args[0]!r}") from None
        return vecs[idx, layer, :]

    def embed(self, item_id: str, segment: int | None, layer: int) -> Embedding:
        return Embedding(self.embed_many([item_id], segment, layer)[0], source_tag=f"array/layer{layer}")


class FileEmbeddingProvider(ArrayProvider):
    """Embeddings computed elsewhere (e.g. by a CNN) and stored in an AILKEMB1 file.

    ``whole_path`` optionally names a single-segment companion file of whole-image vectors.
    """

    def __init__(self, path, whole_path=None):
        ids, vecs = read_embedding_file(path)
        whole = wids = None
        if whole_path is not None:
            wids, wvecs = read_embedding_file(whole_path)
            if wvecs.shape[1] != 1:
                raise DimensionError("whole-image file must have exactly one segment")
            whole = wvecs[:, 0]
        super().__init__(ids, vecs, whole, wids)

    def embed(self, item_id: str, segment: int | None, layer: int) -> Embedding:
        return Embedding(self.embed_many([item_id], segment, layer)[0], source_tag=f"file/layer{layer}")


class CachingProvider:
    """Memoises another provider's vectors per (id, segment, layer)."""

    def __init__(self, inner):
        self.inner = inner
        self.n_segments = inner.n_segments
        self.n_layers = inner.n_layers
        self.dim = inner.dim
        self.concurrency_safe = getattr(inner, "concurrency_safe", False)
        self._cache: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed_many(self, ids: Sequence[str], segment: int | None, layer: int) -> np.ndarray:
        with self._lock:
            missing = [i for i in dict.fromkeys(ids) if (i, segment, layer) not in self._cache]
        if missing:
            fresh = self.inner.embed_many(missing, segment, layer)
            with self._lock:
                for item_id, v in zip(missing, fresh):
                    self._cache[(item_id, segment, layer)] = v
        with self._lock:
            rows = [self._cache[(i, segment, layer)] for i in ids]
        return np.array(rows).reshape(len(ids), self.dim)

    def embed(self, item_id: str, segment: int | None, layer: int) -> Embedding:
        return Embedding(self.embed_many([item_id], segment, layer)[0], source_tag="cached")


def export_provider(provider, corpus: Corpus, path, whole_path=None) -> None:
    """Materialise any provider's corpus into embedding file(s)."""
    ids = corpus.ids
    segs = [None] if provider.n_segments == 1 else list(range(provider.n_segments))
    vecs = np.stack([np.stack([provider.embed_many(ids, seg, layer) for layer in range(provider.n_layers)], axis=1)
                     for seg in segs], axis=1)
    write_embedding_file(path, ids, vecs)
    if whole_path is not None:
        whole = np.stack([provider.embed_many(ids, None, layer) for layer in range(provider.n_layers)], axis=1)
        write_embedding_file(whole_path, ids, whole[:, None])
