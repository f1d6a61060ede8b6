"""Attack resistance with and without vaccinated training.

For each lambda, trains plain, tau-only and pca+tau vaccinated models (vaccine:
the ds2 look-alikes), then reports the held-out FRR, the FAR of the ds1 look-alikes,
the FAR of Bernoulli samples, and guessing-attack trial counts with real training
images tried same-type-first or shuffled.
"""
from _common import corpus, emit, parser

from ailock.core import ParamSet
from ailock.evaluation import (bernoulli_attack_stats, build_pairs, cross_validate, evaluate, guessing_attack,
                               image_attack_stats)

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--lambdas", default="50,150,300,500")
    ap.add_argument("--variant", default="slss")
    ap.add_argument("--bernoulli", type=int, default=2000, help="Bernoulli samples per reference")
    args = ap.parse_args()
    provider, data = corpus(args)
    train, hold, ds1, ds2 = (data.split(s) for s in ("train", "holdout", "ds1", "ds2"))
    pairs = build_pairs(hold)
    rows = []
    for lam in map(int, args.lambdas.split(",")):
        params = ParamSet.for_variant(args.variant, lam, 0.7)
        for mode in ("none", "tau-only", "pca+tau"):
            kw = {} if mode == "none" else {"vaccine": ds2, "mode": mode}
            model = cross_validate(provider, train, params, args.folds, master_seed=args.seed, fold_seed=args.seed,
                                   t_candidates=None if params.s == 1 else (3, 4, 5), workers=args.workers,
                                   **kw).model
            img = image_attack_stats(model, provider, hold, ds1, args.workers)
            bern = bernoulli_attack_stats(model, provider, train, hold, args.bernoulli, args.seed, args.workers)
            guess = guessing_attack(model, provider, hold, train, args.seed, workers=args.workers)
            rows.append({"lambda": lam, "vaccine": mode, "tau": [round(t, 4) for t in model.taus],
                         "frr": evaluate(model, provider, pairs).frr, "image_far": img.far,
                         "image_broken": img.broken_fraction, "bernoulli_far": bern.far,
                         "guess_same_type": guess["same-type-first"].mean_trials_broken,
                         "guess_shuffled": guess["shuffled"].mean_trials_broken,
                         "guess_broken": guess["shuffled"].broken_fraction})
    emit(args, rows, ["lambda", "vaccine", "tau", "frr", "image_far", "image_broken", "bernoulli_far",
                      "guess_broken", "guess_same_type", "guess_shuffled"])
