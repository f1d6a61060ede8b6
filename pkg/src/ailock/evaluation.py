"""Measurement harness: pairs, threshold discovery, error rates, attacks, LSIM checks.

All heavy loops reduce integer counts, and work is split into fixed chunks whose
results are concatenated in order, so outputs do not depend on the worker count.
"""
from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import ParamSet, correction_capacity
from .features import InsufficientDataError, Selector, make_selector
from .lsh import expected_collision_many
from .pipeline import EmbeddingProvider, PipelineModel, make_prints_many, split_prints
from .providers import Corpus
from .sketch import authenticate_many, enroll
from .stats import mann_whitney_greater

GRID_SIZE = 4001
CHUNK = 1 << 15

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def _pmap(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Pairs


@dataclass(frozen=True)
class AuthSample:
    ref_id: str
    cand_id: str
    valid: bool

    @property
    def label(self) -> str:
        return "valid" if self.valid else "invalid"


@dataclass(frozen=True, eq=False)
class PairSet(Sequence):
    """Pairs stored as index arrays into ``ids``; indexes like a list of AuthSample."""

    ids: tuple[str, ...]
    ref: np.ndarray
    cand: np.ndarray
    valid: np.ndarray

    def __len__(self):
        return len(self.ref)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return AuthSample(self.ids[self.ref[i]], self.ids[self.cand[i]], bool(self.valid[i]))

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def n_invalid(self) -> int:
        return len(self) - self.n_valid

    @classmethod
    def from_samples(cls, samples: Iterable[AuthSample]) -> "PairSet":
        samples = list(samples)
        index: dict[str, int] = {}
        for s in samples:
            index.setdefault(s.ref_id, len(index))
            index.setdefault(s.cand_id, len(index))
        return cls(tuple(index), np.array([index[s.ref_id] for s in samples], dtype=np.int64),
                   np.array([index[s.cand_id] for s in samples], dtype=np.int64),
                   np.array([s.valid for s in samples], dtype=bool))

    def concat(self, other: "PairSet") -> "PairSet":
        index = {k: i for i, k in enumerate(self.ids)}
        for k in other.ids:
            index.setdefault(k, len(index))
        remap = np.array([index[k] for k in other.ids], dtype=np.int64)
        return PairSet(tuple(index), np.concatenate([self.ref, remap[other.ref]]),
                       np.concatenate([self.cand, remap[other.cand]]), np.concatenate([self.valid, other.valid]))


def build_pairs(corpus: Corpus, policy: str = "all-pairs", attack: Corpus | None = None) -> PairSet:
    """Authentication samples over a labelled corpus.

    ``all-pairs``: every unordered pair of distinct images, valid iff same object.
    ``cross``: every corpus image as reference against every ``attack`` image.
    """
    if len(corpus) == 0:
        raise ValueError("cannot build pairs from an empty corpus")
    objs = np.array([it.object_id for it in corpus.items])
    if policy == "all-pairs":
        ref, cand = np.triu_indices(len(corpus), 1)
        return PairSet(tuple(corpus.ids), ref.astype(np.int64), cand.astype(np.int64), objs[ref] == objs[cand])
    if policy == "cross":
        if attack is None or len(attack) == 0:
            raise ValueError("cross pairing needs a non-empty attack corpus")
        n, m = len(corpus), len(attack)
        index = {k: i for i, k in enumerate(corpus.ids)}
        for k in attack.ids:
            index.setdefault(k, len(index))
        att_rows = np.array([index[k] for k in attack.ids], dtype=np.int64)
        att_objs = np.array([it.object_id for it in attack.items])
        ref = np.repeat(np.arange(n, dtype=np.int64), m)
        cand = np.tile(att_rows, n)
        valid = (objs[:, None] == att_objs[None, :]).ravel()
        return PairSet(tuple(index), ref, cand, valid)
    raise ValueError(f"unknown pairing policy {policy!r}")


# ---------------------------------------------------------------------------
# Distances and decisions


def segment_width(params: ParamSet) -> int:
    return params.l * params.lam


def _packed_segments(prints: np.ndarray, params: ParamSet) -> list[np.ndarray]:
    w = segment_width(params)
    return [np.packbits(prints[:, i * w:(i + 1) * w], axis=1) for i in range(params.s)]


def pair_distances(prints: np.ndarray, params: ParamSet, ref: np.ndarray, cand: np.ndarray,
                   cand_prints: np.ndarray | None = None, workers: int = 1) -> np.ndarray:
    """Per-segment Hamming distances, shape ``(pairs, s)``.

    ``ref`` indexes rows of ``prints``; ``cand`` indexes ``cand_prints`` (default ``prints``).
    """
    a = _packed_segments(prints, params)
    b = a if cand_prints is None else _packed_segments(cand_prints, params)

    def job(lo):
        r, c = ref[lo:lo + CHUNK], cand[lo:lo + CHUNK]
        return np.stack([_POPCOUNT[pa[r] ^ pb[c]].sum(axis=1, dtype=np.int64) for pa, pb in zip(a, b)], axis=1)

    parts = _pmap(job, range(0, len(ref), CHUNK), workers)
    if not parts:
        return np.zeros((0, params.s), dtype=np.int64)
    return np.concatenate(parts)


def capacities(params: ParamSet, taus: Sequence[float]) -> np.ndarray:
    w = segment_width(params)
    return np.array([correction_capacity(w, t) for t in taus], dtype=np.int64)


def decide(dists: np.ndarray, params: ParamSet, taus: Sequence[float]) -> np.ndarray:
    """Accept when at least t segments lie within their correction capacity."""
    return (dists <= capacities(params, taus)[None, :]).sum(axis=1) >= params.t


def effective_distance(dists: np.ndarray, t: int) -> np.ndarray:
    """t-th smallest segment distance; with a common threshold, accept iff it is <= c."""
    return np.sort(dists, axis=1)[:, t - 1]


@dataclass(frozen=True)
class Counts:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_decisions(cls, accept: np.ndarray, valid: np.ndarray) -> "Counts":
        accept, valid = np.asarray(accept, bool), np.asarray(valid, bool)
        tp = int(np.sum(accept & valid))
        fp = int(np.sum(accept & ~valid))
        return cls(tp, fp, int(np.sum(~valid)) - fp, int(np.sum(valid)) - tp)

    def __add__(self, o: "Counts") -> "Counts":
        return Counts(self.tp + o.tp, self.fp + o.fp, self.tn + o.tn, self.fn + o.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def far(self) -> float | None:
        n = self.fp + self.tn
        return self.fp / n if n else None

    @property
    def frr(self) -> float | None:
        n = self.fn + self.tp
        return self.fn / n if n else None

    @property
    def f1(self) -> float | None:
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else None


# ---------------------------------------------------------------------------
# Threshold sweep


def threshold_grid(grid_size: int = GRID_SIZE) -> np.ndarray:
    if grid_size < 2:
        raise ValueError("grid needs at least two points")
    return np.arange(grid_size) / (grid_size - 1)


def _grid_capacities(n_bits: int, grid_size: int) -> np.ndarray:
    # floor(n * (1 - k/(G-1))) in integers; equals correction_capacity at every grid point
    g = grid_size - 1
    return (n_bits * (g - np.arange(grid_size))) // g


def _curves_from_distances(d: np.ndarray, valid: np.ndarray, n_bits: int, grid_size: int):
    """TP and FP counts at every grid threshold for integer distances."""
    d = np.asarray(d, dtype=np.int64)
    valid = np.asarray(valid, bool)
    cv = np.cumsum(np.bincount(d[valid], minlength=n_bits + 1))
    ci = np.cumsum(np.bincount(d[~valid], minlength=n_bits + 1))
    c = _grid_capacities(n_bits, grid_size)
    return cv[c], ci[c]


def _curves_from_similarities(sim: np.ndarray, valid: np.ndarray, grid: np.ndarray):
    sim = np.asarray(sim, dtype=np.float64)
    valid = np.asarray(valid, bool)
    sv, si = np.sort(sim[valid]), np.sort(sim[~valid])
    tp = len(sv) - np.searchsorted(sv, grid, side="left")
    fp = len(si) - np.searchsorted(si, grid, side="left")
    return tp, fp


def _f1(tp, fp, n_valid):
    tp = np.asarray(tp, dtype=np.float64)
    den = tp + fp + n_valid  # 2TP + FP + FN with FN = n_valid - TP
    return np.divide(2 * tp, den, out=np.zeros_like(den, dtype=np.float64), where=den > 0)


def argmax_last(values: np.ndarray) -> int:
    """Index of the maximum, preferring the largest index among ties."""
    values = np.asarray(values)
    return len(values) - 1 - int(np.argmax(values[::-1]))


@dataclass(frozen=True, eq=False)
class SweepResult:
    tau: float
    f1: float
    grid: np.ndarray
    f1_curve: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    n_valid: int
    n_invalid: int

    @property
    def far_curve(self) -> np.ndarray:
        return self.fp / self.n_invalid

    @property
    def frr_curve(self) -> np.ndarray:
        return (self.n_valid - self.tp) / self.n_valid


def sweep_threshold(scores, labels=None, grid_size: int = GRID_SIZE, n_bits: int | None = None) -> SweepResult:
    """Pick the grid threshold with maximal F1 (ties go to the larger, stricter value).

    ``scores`` are similarities (accept iff score >= tau), or, when ``n_bits`` is
    given, integer Hamming distances (accept iff d <= floor(n_bits * (1 - tau))).
    ``labels=None`` reads ``scores`` as a sequence of ``(score, valid)`` pairs.
    """
    if labels is None:
        pairs = list(scores)
        scores = [p[0] for p in pairs]
        labels = [p[1] for p in pairs]
    valid = np.array([lab in (True, 1, "valid") for lab in labels], dtype=bool)
    nv = int(valid.sum())
    ni = len(valid) - nv
    if nv == 0 or ni == 0:
        raise ValueError("F1 is undefined unless both valid and invalid samples are present")
    grid = threshold_grid(grid_size)
    if n_bits is None:
        tp, fp = _curves_from_similarities(scores, valid, grid)
    else:
        tp, fp = _curves_from_distances(scores, valid, n_bits, grid_size)
    curve = _f1(tp, fp, nv)
    k = argmax_last(curve)
    return SweepResult(float(grid[k]), float(curve[k]), grid, curve, tp, fp, nv, ni)


def equal_error_rate(far: np.ndarray, frr: np.ndarray) -> float:
    """Where the FAR and FRR step curves cross, interpolating linearly between grid points.

    Both curves are indexed by an increasing threshold (FAR falls, FRR rises).
    """
    diff = np.asarray(far, dtype=np.float64) - np.asarray(frr, dtype=np.float64)
    hit = np.flatnonzero(diff <= 0)
    if len(hit) == 0:
        return float(far[-1] + frr[-1]) / 2
    k = int(hit[0])
    if k == 0:
        return float(far[0] + frr[0]) / 2 if diff[0] < 0 else float(far[0])
    a = diff[k - 1] / (diff[k - 1] - diff[k])
    return float(far[k - 1] + a * (far[k] - far[k - 1]))


# ---------------------------------------------------------------------------
# Entropy


def entropy_bits(far: float, trials: int | None = None) -> float:
    """Bits of guessing work implied by a false accept rate: -log2(FAR).

    With FAR = 0 the estimate is the lower bound log2(trials); see :func:`entropy_estimate`.
    """
    return entropy_estimate(far, trials)[0]


def entropy_estimate(far: float, trials: int | None = None) -> tuple[float, bool]:
    """``(bits, is_bound)``; ``is_bound`` is True when FAR was zero."""
    if not 0.0 <= far <= 1.0 or math.isnan(far):
        raise ValueError(f"FAR must lie in [0, 1], got {far}")
    if far > 0:
        return -math.log2(far), False
    if not trials:
        raise ValueError("FAR is zero: pass the number of attack trials to get a lower bound")
    return math.log2(trials), True


# ---------------------------------------------------------------------------
# Training


def whole_embeddings(provider: EmbeddingProvider, ids: Sequence[str], layer: int) -> np.ndarray:
    """Whole-image vectors for PCA fitting, or all segment vectors pooled when there are none."""
    try:
        return provider.embed_many(ids, None, layer)
    except KeyError:
        return np.concatenate([provider.embed_many(ids, seg, layer) for seg in range(provider.n_segments)])


def fit_selectors(provider: EmbeddingProvider, ids: Sequence[str], params: ParamSet, kind: str = "pca",
                  seed: int = 0) -> tuple[Selector, ...]:
    if kind == "pca" and len(ids) < params.pc_hi:
        raise InsufficientDataError(f"{len(ids)} training images cannot support {params.pc_hi} components")
    return tuple(make_selector(kind, whole_embeddings(provider, ids, layer), params.pc_lo, params.pc_hi,
                               seed=seed + layer) for layer in range(params.l))


def bernoulli_matrix(prints: np.ndarray, n_samples: int, seed: int) -> np.ndarray:
    """Rows drawn bit-wise independently with the per-position frequency of ones."""
    prints = np.asarray(prints, dtype=np.uint8)
    if prints.ndim != 2 or prints.shape[0] == 0:
        raise ValueError("need a non-empty set of equal-length prints")
    p = prints.mean(axis=0)
    rng = np.random.Generator(np.random.Philox(seed))
    return (rng.random((n_samples, prints.shape[1])) < p).astype(np.uint8)


def bernoulli_attack(prints_corpus, n_samples: int, seed: int) -> list:
    """Synthetic credentials from a per-position Bernoulli model of ``prints_corpus``."""
    from .core import Imageprint

    rows = [np.asarray(p.bits if isinstance(p, Imageprint) else p, dtype=np.uint8) for p in prints_corpus]
    if not rows:
        raise ValueError("need a non-empty set of equal-length prints")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("prints differ in length")
    return [Imageprint(r) for r in bernoulli_matrix(np.stack(rows), n_samples, seed)]


@dataclass(frozen=True, eq=False)
class CVResult:
    model: PipelineModel
    grid: np.ndarray
    mean_f1: np.ndarray  # (s, grid)
    fold_f1: np.ndarray  # (k, s, grid)
    counts: Counts  # pooled over validation folds at the chosen thresholds
    t_scores: dict = field(default_factory=dict)

    @property
    def f1(self) -> float | None:
        return self.counts.f1


def _object_folds(corpus: Corpus, k: int, seed: int) -> list[list[int]]:
    objects = corpus.objects()
    if k < 2:
        raise ValueError("need at least two folds")
    if len(objects) < k:
        raise ValueError(f"{len(objects)} objects cannot fill {k} folds")
    order = np.random.Generator(np.random.Philox(seed)).permutation(len(objects))
    fold_of = {objects[o]: r % k for r, o in enumerate(order)}
    folds = [[] for _ in range(k)]
    for i, it in enumerate(corpus.items):
        folds[fold_of[it.object_id]].append(i)
    return folds


def _round_robin(n: int, k: int, seed: int) -> list[list[int]]:
    order = np.random.Generator(np.random.Philox(seed)).permutation(n)
    return [sorted(int(i) for i in order[f::k]) for f in range(k)]


def cross_validate(provider: EmbeddingProvider, corpus: Corpus, params: ParamSet, k: int = 5, *,
                   vaccine: Corpus | None = None, bernoulli_vaccine: int = 0, mode: str = "tau-only",
                   selector: str = "pca", master_seed: int = 0, fold_seed: int = 0,
                   t_candidates: Sequence[int] | None = None, grid_size: int = GRID_SIZE,
                   workers: int = 1) -> CVResult:
    """k-fold threshold discovery, split by object.

    Each fold fits the feature stage on the other folds, builds all pairs inside the
    held-out fold, and traces F1 over the threshold grid per segment. Each segment's
    threshold maximises the fold-averaged F1 curve. Vaccine images (and, if
    requested, Bernoulli samples of the fold's training prints) enter as extra
    invalid pairs against the held-out fold; in ``pca+tau`` mode the vaccine images
    also join the PCA fit.
    """
    if mode not in ("tau-only", "pca+tau"):
        raise ValueError(f"unknown vaccine mode {mode!r}")
    if len(corpus) == 0:
        raise ValueError("training corpus is empty")
    folds = _object_folds(corpus, k, fold_seed)
    vac_items = list(vaccine.items) if vaccine is not None else []
    vac_folds = _round_robin(len(vac_items), k, fold_seed + 1) if vac_items else [[] for _ in range(k)]
    items = corpus.items
    w = segment_width(params)
    grid = threshold_grid(grid_size)
    base_taus = (params.tau,) * params.s

    fold_curves, fold_data = [], []
    for f in range(k):
        held = Corpus(tuple(items[i] for i in folds[f]))
        train_ids = [items[i].id for g in range(k) if g != f for i in folds[g]]
        pca_ids = list(train_ids)
        if mode == "pca+tau":
            pca_ids += [vac_items[i].id for g in range(k) if g != f for i in vac_folds[g]]
        selectors = fit_selectors(provider, pca_ids, params, selector, master_seed)
        fold_model = PipelineModel(params, selectors, master_seed, base_taus)

        pairs = build_pairs(held)
        vac = Corpus(tuple(vac_items[i] for i in vac_folds[f]))
        if len(vac):
            pairs = pairs.concat(build_pairs(held, "cross", vac))
        prints = make_prints_many(fold_model, provider, pairs.ids)
        dists = pair_distances(prints, params, pairs.ref, pairs.cand, workers=workers)
        valid = pairs.valid
        if bernoulli_vaccine:
            fake = bernoulli_matrix(make_prints_many(fold_model, provider, train_ids), bernoulli_vaccine,
                                    seed=master_seed * 1009 + f)
            held_rows = np.array([pairs.ids.index(i) for i in held.ids], dtype=np.int64)
            ref = np.repeat(held_rows, bernoulli_vaccine)
            cand = np.tile(np.arange(bernoulli_vaccine, dtype=np.int64), len(held_rows))
            dists = np.concatenate([dists, pair_distances(prints, params, ref, cand, fake, workers)])
            valid = np.concatenate([valid, np.zeros(len(ref), bool)])
        nv = int(valid.sum())
        curves = []
        for i in range(params.s):
            tp, fp = _curves_from_distances(dists[:, i], valid, w, grid_size)
            curves.append(_f1(tp, fp, nv))
        fold_curves.append(np.stack(curves))
        fold_data.append((dists, valid))

    if not any(v.any() for _, v in fold_data):
        raise ValueError("no validation fold contains a same-object pair")
    fold_f1 = np.stack(fold_curves)
    mean_f1 = fold_f1.mean(axis=0)
    taus = tuple(float(grid[argmax_last(mean_f1[i])]) for i in range(params.s))

    t_scores = {}
    if t_candidates:
        for t in t_candidates:
            p_t = dataclasses.replace(params, t=t)
            c = sum((Counts.from_decisions(decide(d, p_t, taus), v) for d, v in fold_data), Counts(0, 0, 0, 0))
            t_scores[int(t)] = c.f1 if c.f1 is not None else 0.0
        best = max(t_scores.values())
        params = dataclasses.replace(params, t=max(t for t, v in t_scores.items() if v == best))
    counts = sum((Counts.from_decisions(decide(d, params, taus), v) for d, v in fold_data), Counts(0, 0, 0, 0))

    pca_ids = corpus.ids + ([it.id for it in vac_items] if mode == "pca+tau" else [])
    model = PipelineModel(params, fit_selectors(provider, pca_ids, params, selector, master_seed), master_seed, taus)
    return CVResult(model, grid, mean_f1, fold_f1, counts, t_scores)


def kfold_train(provider: EmbeddingProvider, corpus: Corpus, params: ParamSet, k: int = 5,
                mode: str = "tau-only", vaccine: Corpus | None = None, **kw) -> PipelineModel:
    return cross_validate(provider, corpus, params, k, vaccine=vaccine, mode=mode, **kw).model


# ---------------------------------------------------------------------------
# Evaluation


def _f(x):
    return None if x is None else float(x)


@dataclass(frozen=True)
class AttackStats:
    n_references: int
    n_candidates: int
    accepted: int
    far: float
    broken_fraction: float
    mean_trials: float  # unbroken references counted at n_candidates
    mean_trials_broken: float | None  # over broken references only

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class EvalReport:
    mode: str
    variant: str | None
    lam: int
    t: int
    tau_used: tuple[float, ...]
    n_pairs: int
    n_valid: int
    n_invalid: int
    counts: Counts
    far: float | None
    frr: float | None
    f1: float | None
    eer: float | None
    entropy_bits: float | None
    entropy_is_bound: bool
    agreement: float | None = None
    attack_stats: dict | None = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["tau_used"] = list(self.tau_used)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        def fmt(v):
            if v is None:
                return "n/a"
            if isinstance(v, float):
                return f"{v:.6f}"
            return str(v)

        rows = [("mode", self.mode), ("variant", self.variant), ("lambda", self.lam), ("t", self.t),
                ("tau", " ".join(f"{t:.4f}" for t in self.tau_used)), ("pairs", self.n_pairs),
                ("valid", self.n_valid), ("invalid", self.n_invalid), ("TP", self.counts.tp),
                ("FP", self.counts.fp), ("TN", self.counts.tn), ("FN", self.counts.fn), ("FAR", self.far),
                ("FRR", self.frr), ("F1", self.f1), ("EER", self.eer),
                ("entropy_bits" + (" (lower bound)" if self.entropy_is_bound else ""), self.entropy_bits)]
        if self.agreement is not None:
            rows.append(("sketch/threshold agreement", self.agreement))
        for name, stats in (self.attack_stats or {}).items():
            for key, v in stats.items():
                rows.append((f"{name}.{key}", v))
        width = max(len(r[0]) for r in rows)
        return "".join(f"{k:<{width}}  {fmt(v)}\n" for k, v in rows)


def common_tau_curves(dists: np.ndarray, valid: np.ndarray, params: ParamSet, grid_size: int = GRID_SIZE):
    """FAR and FRR over the grid when every segment uses the same threshold."""
    eff = effective_distance(dists, params.t)
    tp, fp = _curves_from_distances(eff, valid, segment_width(params), grid_size)
    nv = int(valid.sum())
    ni = len(valid) - nv
    return fp / ni, (nv - tp) / nv


def _ref_seed(seed: int, ref: int) -> int:
    return (seed << 32) | ref


def sketch_decisions(model: PipelineModel, prints: np.ndarray, ref: np.ndarray, cand: np.ndarray,
                     seed: int = 0, workers: int = 1, cand_prints: np.ndarray | None = None) -> np.ndarray:
    """Run the enrolment/authentication protocol for every pair (one record per reference)."""
    cp = prints if cand_prints is None else cand_prints
    out = np.zeros(len(ref), dtype=bool)
    refs = np.unique(ref)

    def job(r):
        idx = np.flatnonzero(ref == r)
        rec = enroll(split_prints(prints[r], model.params.lam), model.params, rng_seed=_ref_seed(seed, int(r)),
                     taus=model.taus)
        return idx, authenticate_many(rec, cp[cand[idx]])

    for idx, acc in _pmap(job, list(refs), workers):
        out[idx] = acc
    return out


def evaluate(model: PipelineModel, provider: EmbeddingProvider, pairs: PairSet, mode: str = "distance", *,
             seed: int = 0, workers: int = 1, grid_size: int = GRID_SIZE) -> EvalReport:
    """Error rates of ``model`` over ``pairs``.

    ``distance`` decides by per-segment Hamming distance against the thresholds;
    ``sketch`` runs enrolment and authentication for real and also reports how often
    the two agree.
    """
    if mode not in ("distance", "sketch"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    params = model.params
    prints = make_prints_many(model, provider, pairs.ids)
    dists = pair_distances(prints, params, pairs.ref, pairs.cand, workers=workers)
    accept = decide(dists, params, model.taus)
    agreement = None
    if mode == "sketch":
        by_sketch = sketch_decisions(model, prints, pairs.ref, pairs.cand, seed, workers)
        agreement = float(np.mean(by_sketch == accept)) if len(accept) else 1.0
        accept = by_sketch
    return _report(mode, params, model.taus, accept, dists, pairs.valid, grid_size, agreement)


def _report(mode, params, taus, accept, dists, valid, grid_size, agreement=None, attack_stats=None) -> EvalReport:
    counts = Counts.from_decisions(accept, valid)
    eer = None
    if valid.any() and not valid.all():
        eer = equal_error_rate(*common_tau_curves(dists, valid, params, grid_size))
    far = counts.far
    ent, bound = (None, False)
    if far is not None:
        ent, bound = entropy_estimate(far, counts.fp + counts.tn)
    return EvalReport(mode=mode, variant=params.variant, lam=params.lam, t=params.t, tau_used=tuple(taus),
                      n_pairs=counts.total, n_valid=int(valid.sum()), n_invalid=int((~valid).sum()), counts=counts,
                      far=_f(far), frr=_f(counts.frr), f1=_f(counts.f1), eer=_f(eer), entropy_bits=_f(ent),
                      entropy_is_bound=bound, agreement=agreement, attack_stats=attack_stats)


# ---------------------------------------------------------------------------
# Attacks


def accept_matrix(model: PipelineModel, ref_prints: np.ndarray, cand_prints: np.ndarray,
                  workers: int = 1) -> np.ndarray:
    """``(references, candidates)`` accept decisions in distance mode."""
    n, m = len(ref_prints), len(cand_prints)
    out = np.zeros((n, m), dtype=bool)
    rows_per = max(1, CHUNK // max(m, 1))

    def job(lo):
        rs = np.arange(lo, min(lo + rows_per, n))
        ref = np.repeat(rs, m)
        cand = np.tile(np.arange(m), len(rs))
        d = pair_distances(ref_prints, model.params, ref, cand, cand_prints)
        return lo, decide(d, model.params, model.taus).reshape(len(rs), m)

    for lo, block in _pmap(job, list(range(0, n, rows_per)), workers):
        out[lo:lo + len(block)] = block
    return out


def attack_stats_from(accepted: np.ndarray, orders: Sequence[np.ndarray] | None = None) -> AttackStats:
    """Summarise an accept matrix; trials follow ``orders[r]`` (default: column order)."""
    n, m = accepted.shape
    trials = np.full(n, m, dtype=np.int64)
    broken = np.zeros(n, dtype=bool)
    for r in range(n):
        row = accepted[r] if orders is None else accepted[r][orders[r]]
        hits = np.flatnonzero(row)
        if len(hits):
            broken[r] = True
            trials[r] = hits[0] + 1
    acc = int(accepted.sum())
    return AttackStats(
        n_references=n, n_candidates=m, accepted=acc, far=acc / (n * m) if n * m else 0.0,
        broken_fraction=float(broken.mean()) if n else 0.0, mean_trials=float(trials.mean()) if n else 0.0,
        mean_trials_broken=float(trials[broken].mean()) if broken.any() else None)


def bernoulli_attack_stats(model: PipelineModel, provider: EmbeddingProvider, train: Corpus, refs: Corpus,
                           n_samples: int, seed: int, workers: int = 1) -> AttackStats:
    """Fit the Bernoulli model on the training prints and try every sample against every reference."""
    fake = bernoulli_matrix(make_prints_many(model, provider, train.ids), n_samples, seed)
    ref_prints = make_prints_many(model, provider, refs.ids)
    return attack_stats_from(accept_matrix(model, ref_prints, fake, workers))


def image_attack_stats(model: PipelineModel, provider: EmbeddingProvider, refs: Corpus, attack: Corpus,
                       workers: int = 1) -> AttackStats:
    """Every attack image (e.g. generated look-alikes) against every reference."""
    ref_prints = make_prints_many(model, provider, refs.ids)
    att_prints = make_prints_many(model, provider, attack.ids)
    return attack_stats_from(accept_matrix(model, ref_prints, att_prints, workers))


ORDERINGS = ("same-type-first", "shuffled")


def attack_orders(refs: Corpus, attack: Corpus, ordering: str, seed: int) -> list[np.ndarray]:
    """Per-reference order in which an attacker tries the attack images."""
    if ordering not in ORDERINGS:
        raise ValueError(f"unknown ordering {ordering!r}")
    rng = np.random.Generator(np.random.Philox(seed))
    types = np.array([it.object_type for it in attack.items])
    orders = []
    for it in refs.items:
        if ordering == "shuffled":
            orders.append(rng.permutation(len(attack)))
        else:
            same = np.flatnonzero(types == it.object_type)
            other = np.flatnonzero(types != it.object_type)
            orders.append(np.concatenate([rng.permutation(same), rng.permutation(other)]).astype(np.int64))
    return orders


def guessing_attack(model: PipelineModel, provider: EmbeddingProvider, refs: Corpus, attack: Corpus,
                    seed: int = 0, orderings: Sequence[str] = ORDERINGS, workers: int = 1) -> dict[str, AttackStats]:
    """Brute force each reference with real images, counting trials to the first false accept."""
    ref_prints = make_prints_many(model, provider, refs.ids)
    att_prints = make_prints_many(model, provider, attack.ids)
    acc = accept_matrix(model, ref_prints, att_prints, workers)
    return {o: attack_stats_from(acc, attack_orders(refs, attack, o, seed)) for o in orderings}


# ---------------------------------------------------------------------------
# LSIM


@dataclass(frozen=True)
class LsimResult:
    granularity: str
    p1: float
    p2: float
    p_value: float
    u: float
    n_valid: int
    n_invalid: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def lsim_from_similarities(similarity: np.ndarray, valid: np.ndarray, granularity: str = "per-bit",
                           accepted: np.ndarray | None = None) -> LsimResult:
    """P1/P2 and the one-sided rank test of valid over invalid per-pair similarity."""
    similarity = np.asarray(similarity, dtype=np.float64)
    valid = np.asarray(valid, bool)
    if valid.all() or not valid.any():
        raise ValueError("LSIM needs both valid and invalid pairs")
    if granularity == "per-bit":
        stat = similarity
    elif granularity == "whole-print":
        if accepted is None:
            raise ValueError("whole-print granularity needs accept decisions")
        stat = np.asarray(accepted, dtype=np.float64)
    else:
        raise ValueError(f"unknown granularity {granularity!r}")
    mw = mann_whitney_greater(similarity[valid], similarity[~valid])
    return LsimResult(granularity, float(stat[valid].mean()), float(stat[~valid].mean()), mw.p_value, mw.u,
                      int(valid.sum()), int((~valid).sum()))


def lsim_verify(model: PipelineModel, provider: EmbeddingProvider, pairs: PairSet,
                granularity: str = "per-bit", workers: int = 1) -> LsimResult:
    """Empirical collision probabilities of valid (P1) and invalid (P2) pairs.

    Per bit: mean fraction of agreeing bits. Whole print: fraction of pairs accepted
    at the model's thresholds. The p-value tests P1 > P2 on per-pair similarity.
    """
    params = model.params
    prints = make_prints_many(model, provider, pairs.ids)
    dists = pair_distances(prints, params, pairs.ref, pairs.cand, workers=workers)
    sim = 1.0 - dists.sum(axis=1) / params.total_bits
    return lsim_from_similarities(sim, pairs.valid, granularity, decide(dists, params, model.taus))


@dataclass(frozen=True)
class AngleReport:
    analytic_valid: float | None
    analytic_invalid: float | None
    empirical_p1: float | None
    empirical_p2: float | None
    gap_valid: float | None
    gap_invalid: float | None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def angle_collision_check(model: PipelineModel, provider: EmbeddingProvider, pairs: PairSet) -> AngleReport:
    """Mean analytic collision 1 - theta/pi of the selected feature vectors against measured bits."""
    params = model.params
    segs = [None] if params.s == 1 else list(range(params.s))
    analytic = np.zeros(len(pairs))
    for seg in segs:
        for layer in range(params.l):
            V = model.selectors[layer].apply(provider.embed_many(pairs.ids, seg, layer))
            analytic += expected_collision_many(V[pairs.ref], V[pairs.cand])
    analytic /= len(segs) * params.l
    prints = make_prints_many(model, provider, pairs.ids)
    dists = pair_distances(prints, params, pairs.ref, pairs.cand)
    sim = 1.0 - dists.sum(axis=1) / params.total_bits

    def mean(x, mask):
        return float(x[mask].mean()) if mask.any() else None

    av, ai = mean(analytic, pairs.valid), mean(analytic, ~pairs.valid)
    ev, ei = mean(sim, pairs.valid), mean(sim, ~pairs.valid)
    gap = (lambda a, b: None if a is None else abs(a - b))
    return AngleReport(av, ai, ev, ei, gap(av, ev), gap(ai, ei))
