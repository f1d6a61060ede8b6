"""Variant orchestration: segments x layers of PCA band -> LSH prints."""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .core import DimensionError, Embedding, Imageprint, ParamSet
from .features import PcaModel, Selector
from .lsh import ProjectionSpec, binarize_many, derive_seed
from .sketch import EnrollmentRecord, authenticate, enroll, params_from_dict, params_to_dict

MODEL_FORMAT = "ailock.model.v1"
SEGMENT_MARGIN = 50


class ImageTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    width: int
    height: int

    def contains(self, px: int, py: int) -> bool:
        return self.x <= px < self.x + self.width and self.y <= py < self.y + self.height


@dataclass(frozen=True)
class SegmentGeometry:
    width: int
    height: int
    rects: tuple[Rect, ...]


def segment_rects(width: int, height: int, s: int) -> SegmentGeometry:
    """Crop rectangles in source pixels.

    Five segments are top-left, bottom-left, top-right, bottom-right and center, each
    half the frame plus 50px. Corner crops grow toward the interior; the center crop
    grows 25px on every side.
    """
    if s == 1:
        return SegmentGeometry(width, height, (Rect(0, 0, width, height),))
    if s != 5:
        raise ValueError(f"segment count must be 1 or 5, got {s}")
    if width < 120 or height < 120:
        raise ImageTooSmallError(f"{width}x{height} is too small for overlapping segments (min 120x120)")
    cw, ch = width // 2 + SEGMENT_MARGIN, height // 2 + SEGMENT_MARGIN
    rects = (
        Rect(0, 0, cw, ch),
        Rect(0, height - ch, cw, ch),
        Rect(width - cw, 0, cw, ch),
        Rect(width - cw, height - ch, cw, ch),
        Rect(width // 4 - SEGMENT_MARGIN // 2, height // 4 - SEGMENT_MARGIN // 2, cw, ch),
    )
    return SegmentGeometry(width, height, rects)


class EmbeddingProvider(Protocol):
    """Source of embeddings keyed by (item id, segment, layer).

    ``segment=None`` requests the whole-image embedding used for PCA fitting.
    """

    n_segments: int
    n_layers: int
    dim: int
    concurrency_safe: bool

    def embed(self, item_id: str, segment: int | None, layer: int) -> Embedding: ...

    def embed_many(self, ids: Sequence[str], segment: int | None, layer: int) -> np.ndarray: ...


def _b64_floats(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _floats_b64(text: str, shape) -> np.ndarray:
    a = np.frombuffer(base64.b64decode(text.encode("ascii"), validate=True), dtype="<f8").astype(np.float64)
    return a.reshape(shape)


def _selector_to_dict(sel: Selector) -> dict:
    d = {"kind": sel.kind, "dim": sel.dim}
    if sel.kind == "pca":
        pca = sel.pca
        d.update(pc_lo=pca.pc_lo, pc_hi=pca.pc_hi, mean=_b64_floats(pca.mean),
                 components=_b64_floats(pca.components), explained_variance=_b64_floats(pca.explained_variance))
    elif sel.kind == "random":
        d["indices"] = [int(i) for i in sel.indices]
    return d


def _selector_from_dict(d: dict) -> Selector:
    dim = int(d["dim"])
    if d["kind"] == "pca":
        hi = int(d["pc_hi"])
        pca = PcaModel(mean=_floats_b64(d["mean"], (dim,)), components=_floats_b64(d["components"], (hi, dim)),
                       explained_variance=_floats_b64(d["explained_variance"], (hi,)),
                       pc_lo=int(d["pc_lo"]), pc_hi=hi)
        return Selector("pca", pca=pca, dim=dim)
    if d["kind"] == "random":
        return Selector("random", indices=np.array(d["indices"], dtype=np.int64), dim=dim)
    if d["kind"] == "raw":
        return Selector("raw", dim=dim)
    raise ValueError(f"unknown selector kind {d['kind']!r}")


@dataclass(frozen=True, eq=False)
class PipelineModel:
    """Everything needed to turn embeddings into prints. Public: holds no secrets."""

    params: ParamSet
    selectors: tuple[Selector, ...]  # one per layer
    master_seed: int
    taus: tuple[float, ...]  # one per segment
    version: str = MODEL_FORMAT

    def __post_init__(self):
        if len(self.selectors) != self.params.l:
            raise ValueError(f"{len(self.selectors)} feature selectors for {self.params.l} layers")
        if len(self.taus) != self.params.s:
            raise ValueError(f"{len(self.taus)} thresholds for {self.params.s} segments")

    def projection(self, segment: int, layer: int) -> ProjectionSpec:
        return ProjectionSpec(seed=derive_seed(self.master_seed, segment, layer),
                              p=self.selectors[layer].p, lam=self.params.lam)

    def with_taus(self, taus: Sequence[float]) -> "PipelineModel":
        return PipelineModel(self.params, self.selectors, self.master_seed, tuple(float(t) for t in taus), self.version)

    def to_json(self) -> str:
        doc = {
            "format": self.version,
            "params": params_to_dict(self.params),
            "master_seed": self.master_seed,
            "taus": list(self.taus),
            "selectors": [_selector_to_dict(s) for s in self.selectors],
            "lsh": [{"segment": i, "layer": j, "seed": self.projection(i, j).seed, "p": self.selectors[j].p}
                    for i in range(self.params.s) for j in range(self.params.l)],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PipelineModel":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {doc.get('format')!r}")
        model = cls(params=params_from_dict(doc["params"]),
                    selectors=tuple(_selector_from_dict(s) for s in doc["selectors"]),
                    master_seed=int(doc["master_seed"]), taus=tuple(float(t) for t in doc["taus"]))
        for entry in doc["lsh"]:
            spec = model.projection(entry["segment"], entry["layer"])
            if spec.seed != entry["seed"] or spec.p != entry["p"]:
                raise ValueError("stored projection seeds disagree with the master seed")
        return model

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "PipelineModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _segments(params: ParamSet) -> list[int | None]:
    return [None] if params.s == 1 else list(range(params.s))


def _check_provider(model: PipelineModel, provider: EmbeddingProvider):
    if provider.n_layers < model.params.l:
        raise DimensionError(f"provider has {provider.n_layers} layers, model needs {model.params.l}")
    if model.params.s > 1 and provider.n_segments < model.params.s:
        raise DimensionError(f"provider has {provider.n_segments} segments, model needs {model.params.s}")
    for sel in model.selectors:
        if sel.dim != provider.dim:
            raise DimensionError(f"provider embeddings have {provider.dim} values, model expects {sel.dim}")


def make_prints_many(model: PipelineModel, provider: EmbeddingProvider, ids: Sequence[str]) -> np.ndarray:
    """Rows of concatenated prints, segment-major then layer-minor (``s*l*lam`` bits)."""
    _check_provider(model, provider)
    blocks = []
    for si, seg in enumerate(_segments(model.params)):
        for layer in range(model.params.l):
            X = provider.embed_many(ids, seg, layer)
            V = model.selectors[layer].apply(X)
            blocks.append(binarize_many(model.projection(si, layer), V))
    return np.concatenate(blocks, axis=1)


def split_prints(row: np.ndarray, lam: int) -> list[Imageprint]:
    return [Imageprint(chunk) for chunk in np.asarray(row).reshape(-1, lam)]


def make_print(model: PipelineModel, provider: EmbeddingProvider, item_id: str) -> list[Imageprint]:
    return split_prints(make_prints_many(model, provider, [item_id])[0], model.params.lam)


def enroll_image(model: PipelineModel, provider: EmbeddingProvider, item_id: str, rng_seed: int | None = None,
                 secondary: bytes | None = None) -> EnrollmentRecord:
    return enroll(make_print(model, provider, item_id), model.params, rng_seed=rng_seed, taus=model.taus,
                  secondary=secondary)


def auth_image(model: PipelineModel, provider: EmbeddingProvider, item_id: str, record: EnrollmentRecord,
               secondary: bytes | None = None) -> bool:
    return authenticate(record, make_print(model, provider, item_id), secondary=secondary)
