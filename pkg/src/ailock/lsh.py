"""Sign-random-projection LSH.

Hyperplanes are regenerated from ``(seed, p, lam)`` and never stored. The stream is
pinned to two named pieces so that a stored seed reproduces the same matrix on any
numpy release:

* Philox-4x64-10 raw output (``numpy.random.Philox(key=seed).random_raw``), whose
  bit stream numpy guarantees to be stable, and
* the Box-Muller transform, applied here rather than numpy's ziggurat sampler.

Draws fill hyperplane 0 first (all ``p`` entries), then hyperplane 1, and so on.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import DimensionError, Imageprint

_TWO_POW_M53 = 2.0**-53


def _box_muller(n: int, seed: int) -> np.ndarray:
    pairs = (n + 1) // 2
    raw = np.random.Philox(key=seed).random_raw(2 * pairs)
    u = (raw >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53
    u1 = 1.0 - u[0::2]  # in (0, 1], keeps log finite
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]


@lru_cache(maxsize=256)
def _hyperplanes(seed: int, p: int, lam: int) -> np.ndarray:
    m = _box_muller(p * lam, seed).reshape(lam, p)
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class ProjectionSpec:
    seed: int
    p: int
    lam: int

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.p < 1 or self.lam < 1:
            raise ValueError("p and lambda must be positive")

    @property
    def hyperplanes(self) -> np.ndarray:
        """``lam x p`` array; row j is the Gaussian vector behind bit j."""
        return _hyperplanes(self.seed, self.p, self.lam)


def binarize_many(spec: ProjectionSpec, V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    if V.shape[-1] != spec.p:
        raise DimensionError(f"vector length {V.shape[-1]} != projection input {spec.p}")
    return (V @ spec.hyperplanes.T >= 0).astype(np.uint8)


def binarize(spec: ProjectionSpec, v) -> Imageprint:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError("binarize expects a single vector; use binarize_many")
    return Imageprint(binarize_many(spec, v))


def angle(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("angle undefined for a zero vector")
    return float(np.arccos(np.clip(u @ v / (nu * nv), -1.0, 1.0)))


def expected_collision(u, v) -> float:
    """Probability that one random hyperplane puts u and v on the same side."""
    return 1.0 - angle(u, v) / np.pi


def expected_collision_many(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    nu = np.linalg.norm(U, axis=1)
    nv = np.linalg.norm(V, axis=1)
    if np.any(nu == 0) or np.any(nv == 0):
        raise ValueError("angle undefined for a zero vector")
    cos = np.einsum("ij,ij->i", U, V) / (nu * nv)
    return 1.0 - np.arccos(np.clip(cos, -1.0, 1.0)) / np.pi


def derive_seed(master: int, segment: int, layer: int) -> int:
    """Per-(segment, layer) seed at a fixed offset from the master seed.

    The offset ignores the total layer count so a single-layer model shares its
    hyperplanes with layer 0 of a multi-layer model.
    """
    return (master + 1 + segment * 256 + layer) % 2**64
