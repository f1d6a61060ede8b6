"""FAR, FRR, F1 and EER of every variant over lambda on the held-out objects."""
from _common import corpus, emit, parser

from ailock.core import ParamSet
from ailock.evaluation import build_pairs, cross_validate, evaluate

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--lambdas", default="50,150,250,350,500")
    args = ap.parse_args()
    provider, data = corpus(args)
    train, pairs = data.split("train"), build_pairs(data.split("holdout"))
    rows = []
    for variant in ("slss", "mlss", "slms", "mlms"):
        for lam in map(int, args.lambdas.split(",")):
            params = ParamSet.for_variant(variant, lam, 0.7)
            model = cross_validate(provider, train, params, args.folds, master_seed=args.seed, fold_seed=args.seed,
                                   t_candidates=None if params.s == 1 else (3, 4, 5), workers=args.workers).model
            rep = evaluate(model, provider, pairs, workers=args.workers)
            rows.append({"variant": variant, "lambda": lam, "t": rep.t, "far": rep.far, "frr": rep.frr,
                         "f1": rep.f1, "eer": rep.eer, "entropy_bits": rep.entropy_bits,
                         "entropy_is_bound": rep.entropy_is_bound})
    emit(args, rows, ["variant", "lambda", "t", "far", "frr", "f1", "eer", "entropy_bits", "entropy_is_bound"])
