"""Feature selection: PCA component bands and the comparison baselines."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DimensionError


class InsufficientDataError(ValueError):
    pass


class RankDeficientError(ValueError):
    def __init__(self, achievable: int, needed: int):
        super().__init__(f"corpus has rank {achievable}, component range needs {needed}")
        self.achievable = achievable
        self.needed = needed


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # rows sorted by descending explained variance
    explained_variance: np.ndarray
    pc_lo: int
    pc_hi: int

    def __post_init__(self):
        if self.pc_hi > self.components.shape[0]:
            raise ValueError(f"pc_hi={self.pc_hi} exceeds {self.components.shape[0]} stored components")
        for arr in (self.mean, self.components, self.explained_variance):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def p(self) -> int:
        return self.pc_hi - self.pc_lo

    @property
    def band(self) -> np.ndarray:
        return self.components[self.pc_lo:self.pc_hi]

    def project_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise DimensionError(f"embedding length {X.shape[-1]} != model dimension {self.dim}")
        return (X - self.mean) @ self.band.T


def _as_matrix(corpus) -> np.ndarray:
    if isinstance(corpus, np.ndarray):
        X = corpus
    else:
        rows = [getattr(e, "values", e) for e in corpus]
        if len({len(r) for r in rows}) > 1:
            raise DimensionError("corpus embeddings differ in length")
        X = np.array(rows)
    return np.asarray(X, dtype=np.float64)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(len(vecs)), idx])
    signs[signs == 0] = 1.0
    return vecs * signs[:, None]


def fit_pca(corpus, pc_lo: int, pc_hi: int, rtol: float = 1e-10) -> PcaModel:
    """Fit a mean-centred PCA and keep the leading ``pc_hi`` components.

    Components are the right singular vectors of the centred data matrix, so they
    coincide with eigenvectors of the sample covariance (ddof=1). Each component is
    flipped so its largest-magnitude entry is positive, which pins the output for
    identical input.
    """
    X = _as_matrix(corpus)
    n, e = X.shape
    if not 0 <= pc_lo < pc_hi:
        raise ValueError(f"empty component range [{pc_lo}, {pc_hi})")
    if n < pc_hi:
        raise InsufficientDataError(f"corpus of {n} embeddings is smaller than pc_hi={pc_hi}")
    if pc_hi > e:
        raise RankDeficientError(e, pc_hi)
    mean = X.mean(axis=0)
    Xc = X - mean
    _, sv, vt = np.linalg.svd(Xc, full_matrices=False)
    var = sv**2 / (n - 1)
    scale = var[0] if var.size and var[0] > 0 else 0.0
    rank = int(np.count_nonzero(var > rtol * scale)) if scale > 0 else 0
    if rank < pc_hi:
        raise RankDeficientError(rank, pc_hi)
    comps = _fix_signs(vt[:pc_hi])
    return PcaModel(mean=mean, components=np.ascontiguousarray(comps), explained_variance=var[:pc_hi].copy(),
                    pc_lo=pc_lo, pc_hi=pc_hi)


def project(model: PcaModel, emb) -> np.ndarray:
    v = np.asarray(getattr(emb, "values", emb), dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError("project expects a single vector; use PcaModel.project_many")
    return model.project_many(v)


def select_raw(emb) -> np.ndarray:
    return np.array(getattr(emb, "values", emb), dtype=np.float64)


def random_k_indices(e: int, k: int, seed: int) -> np.ndarray:
    if not 1 <= k <= e:
        raise ValueError(f"cannot select {k} of {e} coordinates")
    rng = np.random.Generator(np.random.Philox(seed))
    return np.sort(rng.choice(e, size=k, replace=False))


def select_random_k(emb, k: int, seed: int) -> np.ndarray:
    v = select_raw(emb)
    return v[..., random_k_indices(v.shape[-1], k, seed)]


@dataclass(frozen=True, eq=False)
class Selector:
    """Feature stage of the pipeline: PCA band, raw pass-through, or random subset."""

    kind: str  # "pca" | "raw" | "random"
    pca: PcaModel | None = None
    indices: np.ndarray | None = None
    dim: int = 0

    @property
    def p(self) -> int:
        if self.kind == "pca":
            return self.pca.p
        if self.kind == "random":
            return len(self.indices)
        return self.dim

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise DimensionError(f"embedding length {X.shape[-1]} != selector dimension {self.dim}")
        if self.kind == "pca":
            return self.pca.project_many(X)
        if self.kind == "random":
            return X[..., self.indices]
        return X


def make_selector(kind: str, corpus: Sequence | np.ndarray, pc_lo: int, pc_hi: int, seed: int = 0) -> Selector:
    X = _as_matrix(corpus)
    if kind == "pca":
        return Selector("pca", pca=fit_pca(X, pc_lo, pc_hi), dim=X.shape[1])
    if kind == "raw":
        return Selector("raw", dim=X.shape[1])
    if kind == "random":
        return Selector("random", indices=random_k_indices(X.shape[1], pc_hi - pc_lo, seed), dim=X.shape[1])
    raise ValueError(f"unknown selector kind {kind!r}")
