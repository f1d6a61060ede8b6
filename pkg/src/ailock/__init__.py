"""Image-print credentials: PCA band selection, sign-projection LSH and BCH secure sketches."""
from .core import VARIANTS, Embedding, HammingStats, Imageprint, ParamSet, correction_capacity, hamming
from .evaluation import (AuthSample, EvalReport, PairSet, build_pairs, cross_validate, entropy_bits, evaluate,
                         kfold_train, lsim_verify, sweep_threshold)
from .pipeline import PipelineModel, make_print, make_prints_many
from .providers import Corpus, CorpusItem, synth_object_provider
from .sketch import EnrollmentRecord, authenticate, enroll

__version__ = "0.1.0"

__all__ = [
    "VARIANTS", "Embedding", "HammingStats", "Imageprint", "ParamSet", "correction_capacity", "hamming",
    "AuthSample", "EvalReport", "PairSet", "build_pairs", "cross_validate", "entropy_bits", "evaluate",
    "kfold_train", "lsim_verify", "sweep_threshold", "PipelineModel", "make_print", "make_prints_many",
    "Corpus", "CorpusItem", "synth_object_provider", "EnrollmentRecord", "authenticate", "enroll",
]
