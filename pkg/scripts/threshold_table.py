"""Cross-validated threshold per lambda, one row per variant (the tau table)."""
from _common import corpus, emit, parser

from ailock.core import ParamSet
from ailock.evaluation import cross_validate

LAMBDAS = (50, 100, 150, 200, 250, 300, 350, 400, 450, 500)

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--variants", default="slss,mlss,slms,mlms")
    args = ap.parse_args()
    provider, data = corpus(args)
    train = data.split("train")
    rows = []
    for variant in args.variants.split(","):
        for lam in LAMBDAS:
            params = ParamSet.for_variant(variant, lam, 0.7)
            res = cross_validate(provider, train, params, args.folds, master_seed=args.seed, fold_seed=args.seed,
                                 t_candidates=None if params.s == 1 else (3, 4, 5), workers=args.workers)
            rows.append({"variant": variant, "lambda": lam, "t": res.model.params.t,
                         "tau": [round(t, 4) for t in res.model.taus], "cv_f1": res.f1,
                         "t_scores": {str(k): v for k, v in res.t_scores.items()}})
    emit(args, rows, ["variant", "lambda", "t", "cv_f1", "tau"])
