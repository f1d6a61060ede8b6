"""Collision probabilities of valid (P1) and invalid (P2) pairs, per bit and per print."""
from _common import corpus, emit, parser

from ailock.core import ParamSet
from ailock.evaluation import angle_collision_check, build_pairs, fit_selectors, lsim_verify
from ailock.pipeline import PipelineModel

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--tau", type=float, default=0.682, help="fixed threshold for whole-print decisions")
    ap.add_argument("--lambdas", default="50,150,250,350,500")
    args = ap.parse_args()
    args.generated = 0
    provider, data = corpus(args)
    train, pairs = data.split("train"), build_pairs(data.split("holdout"))
    rows = []
    for variant in ("slss", "mlss", "slms", "mlms"):
        for lam in map(int, args.lambdas.split(",")):
            params = ParamSet.for_variant(variant, lam, args.tau)
            model = PipelineModel(params, fit_selectors(provider, train.ids, params), args.seed,
                                  (args.tau,) * params.s)
            bit = lsim_verify(model, provider, pairs, "per-bit", args.workers)
            whole = lsim_verify(model, provider, pairs, "whole-print", args.workers)
            ang = angle_collision_check(model, provider, pairs)
            rows.append({"variant": variant, "lambda": lam, "bit_p1": bit.p1, "bit_p2": bit.p2,
                         "p_value": bit.p_value, "print_p1": whole.p1, "print_p2": whole.p2,
                         "analytic_p1": ang.analytic_valid, "analytic_p2": ang.analytic_invalid})
    emit(args, rows, ["variant", "lambda", "bit_p1", "bit_p2", "p_value", "print_p1", "print_p2",
                      "analytic_p1", "analytic_p2"])
