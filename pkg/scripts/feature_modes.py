"""Feature stage comparison: PCA bands of different rank ranges, raw embeddings, random subsets."""
from _common import corpus, emit, parser

from ailock.core import ParamSet
from ailock.evaluation import build_pairs, cross_validate, evaluate

BANDS = ((0, 64), (32, 96), (64, 128), (128, 192))

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--lambdas", default="50,250,500")
    args = ap.parse_args()
    args.generated = 0
    provider, data = corpus(args)
    train, pairs = data.split("train"), build_pairs(data.split("holdout"))
    configs = [("pca", lo, hi) for lo, hi in BANDS] + [("raw", 32, 96), ("random", 32, 96)]
    rows = []
    for lam in map(int, args.lambdas.split(",")):
        for kind, lo, hi in configs:
            params = ParamSet(lam=lam, tau=0.7, pc_lo=lo, pc_hi=hi)
            model = cross_validate(provider, train, params, args.folds, selector=kind, master_seed=args.seed,
                                   fold_seed=args.seed, workers=args.workers).model
            rep = evaluate(model, provider, pairs, workers=args.workers)
            rows.append({"lambda": lam, "features": kind if kind != "pca" else f"pca[{lo},{hi})",
                         "p": model.selectors[0].p, "tau": model.taus[0], "far": rep.far, "frr": rep.frr,
                         "f1": rep.f1})
    emit(args, rows, ["lambda", "features", "p", "tau", "far", "frr", "f1"])
