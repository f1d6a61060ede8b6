"""Command-line front end.

Exit codes: 0 success/accept, 1 reject (``auth`` only), 2 error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .core import VARIANTS, ParamSet
from .evaluation import (bernoulli_attack_stats, build_pairs, cross_validate, entropy_estimate, evaluate,
                         fit_selectors, guessing_attack, image_attack_stats, lsim_verify, angle_collision_check)
from .pipeline import PipelineModel, auth_image, enroll_image
from .providers import (CachingProvider, FileEmbeddingProvider, export_provider, read_manifest,
                        synth_object_provider, write_manifest)
from .sketch import EnrollmentRecord

SHORT_SECRET_BITS = 80
PARAM_KEYS = {"lambda": "lam", "tau": "tau", "pc_lo": "pc_lo", "pc_hi": "pc_hi", "t": "t"}


class CliError(Exception):
    pass


@dataclass
class Config:
    corpus: str | None = None
    embeddings: str | None = None
    whole: str | None = None
    model: str | None = None
    record: str | None = None
    out: str | None = None
    variant: str = "slss"
    seed: int | None = None
    workers: int = 1
    folds: int = 5
    vaccine: str = "none"  # none | tau-only | pca+tau
    vaccine_split: str = "ds2"
    bernoulli_vaccine: int = 0
    train_split: str = "train"
    split: str = "holdout"
    attack_split: str = "ds1"
    mode: str = "distance"
    selector: str = "pca"
    fixed_tau: bool = False
    lambdas: list[int] = field(default_factory=list)
    param: dict = field(default_factory=dict)


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CliError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(Config)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    bad = sorted(set(doc.get("param", {})) - set(PARAM_KEYS))
    if bad:
        raise CliError(f"unknown param keys: {', '.join(bad)} (allowed: {', '.join(PARAM_KEYS)})")
    return doc


def resolve_config(args: argparse.Namespace) -> Config:
    cfg = Config()
    if getattr(args, "config", None):
        doc = load_config(args.config)
        for k, v in doc.items():
            setattr(cfg, k, dict(v) if k == "param" else v)
    for f in dataclasses.fields(Config):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "param":
            setattr(cfg, f.name, v)
    for key in PARAM_KEYS:
        v = getattr(args, f"param_{key}", None)
        if v is not None:
            cfg.param[key] = v
    if cfg.seed is None and os.environ.get("AILOCK_SEED"):
        try:
            cfg.seed = int(os.environ["AILOCK_SEED"])
        except ValueError:
            raise CliError("AILOCK_SEED must be an integer") from None
    if cfg.variant not in VARIANTS:
        raise CliError(f"unknown variant {cfg.variant!r}; choose from {', '.join(VARIANTS)}")
    return cfg


def _seed(cfg: Config) -> int:
    return 0 if cfg.seed is None else int(cfg.seed)


def _need(cfg: Config, *names: str):
    missing = [n for n in names if getattr(cfg, n) in (None, "")]
    if missing:
        raise CliError("missing required setting(s): " + ", ".join("--" + n for n in missing))


def _params(cfg: Config, lam: int | None = None) -> ParamSet:
    p = dict(cfg.param)
    lam = lam if lam is not None else p.pop("lambda", 500)
    p.pop("lambda", None)
    kw = {PARAM_KEYS[k]: v for k, v in p.items()}
    kw.setdefault("tau", 0.7)
    return ParamSet.for_variant(cfg.variant, int(lam), **kw)


def _provider(cfg: Config):
    _need(cfg, "embeddings")
    for path in (cfg.embeddings, cfg.whole):
        if path is not None and not Path(path).exists():
            raise CliError(f"embedding file {path} not found")
    return FileEmbeddingProvider(cfg.embeddings, cfg.whole)


def _corpus(cfg: Config):
    _need(cfg, "corpus")
    if not Path(cfg.corpus).exists():
        raise CliError(f"manifest {cfg.corpus} not found")
    return read_manifest(cfg.corpus)


def _split(corpus, name: str):
    sub = corpus.split(*name.split(","))
    if len(sub) == 0:
        raise CliError(f"split {name!r} is empty in the manifest")
    return sub


def _load_model(cfg: Config) -> PipelineModel:
    _need(cfg, "model")
    if not Path(cfg.model).exists():
        raise CliError(f"model file {cfg.model} not found")
    return PipelineModel.load(cfg.model)


def _write_reports(out: str | None, doc: dict, text: str):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    path.with_suffix(".txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _table(rows: list[tuple[str, object]]) -> str:
    def fmt(v):
        if v is None:
            return "n/a"
        return f"{v:.6f}" if isinstance(v, float) else str(v)

    width = max(len(k) for k, _ in rows)
    return "".join(f"{k:<{width}}  {fmt(v)}\n" for k, v in rows)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: Config, args) -> int:
    _need(cfg, "out")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    provider, corpus = synth_object_provider(n_objects=args.objects, captures_per_object=args.captures,
                                             holdout_objects=args.holdout, n_generated=args.generated,
                                             target_collision=args.collision, seed=_seed(cfg))
    write_manifest(out / "manifest.csv", corpus)
    export_provider(provider, corpus, out / "embeddings.emb", out / "whole.emb")
    print(f"wrote {len(corpus)} items to {out} (noise sigma {provider.model.noise_sigma:.6f})")
    return 0


def cmd_train(cfg: Config, args) -> int:
    _need(cfg, "out")
    provider = CachingProvider(_provider(cfg))
    corpus = _corpus(cfg)
    train = _split(corpus, cfg.train_split)
    vaccine = None
    if cfg.vaccine not in ("none", "tau-only", "pca+tau"):
        raise CliError(f"unknown vaccine mode {cfg.vaccine!r}")
    if cfg.vaccine != "none":
        vaccine = _split(corpus, cfg.vaccine_split)
    base = _params(cfg)
    lambdas = sorted(set(int(x) for x in cfg.lambdas) | {base.lam})
    t_fixed = "t" in cfg.param
    rows, chosen = [], None
    for lam in lambdas:
        params = _params(cfg, lam)
        if cfg.fixed_tau:
            sel = fit_selectors(provider, train.ids, params, cfg.selector, _seed(cfg))
            model = PipelineModel(params, sel, _seed(cfg), (params.tau,) * params.s)
            rows.append((lam, model, None))
            if lam == base.lam:
                chosen = model
            continue
        res = cross_validate(provider, train, params, cfg.folds, vaccine=vaccine,
                             bernoulli_vaccine=cfg.bernoulli_vaccine,
                             mode="tau-only" if cfg.vaccine == "none" else cfg.vaccine, selector=cfg.selector,
                             master_seed=_seed(cfg), fold_seed=_seed(cfg),
                             t_candidates=None if t_fixed or params.s == 1 else range(3, params.s + 1),
                             workers=cfg.workers)
        rows.append((lam, res.model, res.f1))
        if lam == base.lam:
            chosen = res.model
    chosen.save(cfg.out)
    header = f"{'lambda':>6}  {'t':>2}  {'cv_f1':>8}  tau per segment\n"
    lines = [header]
    for lam, model, f1 in rows:
        f1 = "n/a" if f1 is None else f"{f1:.4f}"
        taus = " ".join(f"{t:.4f}" for t in model.taus)
        lines.append(f"{lam:>6}  {model.params.t:>2}  {f1:>8}  {taus}\n")
    sys.stdout.write("".join(lines))
    print(f"model for lambda={base.lam} written to {cfg.out}")
    return 0


def _secondary(args) -> bytes | None:
    name = getattr(args, "secondary_env", None)
    if not name:
        return None
    value = os.environ.get(name)
    if value is None:
        raise CliError(f"environment variable {name} is not set")
    return value.encode("utf-8")


def cmd_enroll(cfg: Config, args) -> int:
    _need(cfg, "out")
    model = _load_model(cfg)
    provider = _provider(cfg)
    rec = enroll_image(model, provider, args.id, rng_seed=cfg.seed, secondary=_secondary(args))
    Path(cfg.out).write_text(rec.to_json(), encoding="utf-8")
    if rec.secret_bits < SHORT_SECRET_BITS:
        print(f"warning: the code at this lambda/tau carries only {rec.secret_bits} secret bits", file=sys.stderr)
    print(f"enrolled {args.id}; record written to {cfg.out} ({rec.secret_bits}-bit secret)")
    return 0


def cmd_auth(cfg: Config, args) -> int:
    _need(cfg, "record")
    model = _load_model(cfg)
    provider = _provider(cfg)
    if not Path(cfg.record).exists():
        raise CliError(f"record file {cfg.record} not found")
    rec = EnrollmentRecord.from_json(Path(cfg.record).read_text(encoding="utf-8"))
    if rec.params.lam != model.params.lam or rec.params.s != model.params.s or rec.params.l != model.params.l:
        raise CliError("record was not made with this model's parameters")
    ok = auth_image(model, provider, args.id, rec, secondary=_secondary(args))
    print("accept" if ok else "reject")
    return 0 if ok else 1


def cmd_eval(cfg: Config, args) -> int:
    model = _load_model(cfg)
    provider = _provider(cfg)
    corpus = _split(_corpus(cfg), cfg.split)
    if cfg.mode not in ("distance", "sketch"):
        raise CliError(f"unknown eval mode {cfg.mode!r}")
    rep = evaluate(model, provider, build_pairs(corpus), cfg.mode, seed=_seed(cfg), workers=cfg.workers)
    _write_reports(cfg.out, rep.to_dict(), rep.to_text())
    return 0


def cmd_attack(cfg: Config, args) -> int:
    model = _load_model(cfg)
    provider = CachingProvider(_provider(cfg))
    corpus = _corpus(cfg)
    refs = _split(corpus, cfg.split)
    kind = args.kind
    if kind == "bernoulli":
        stats = {"bernoulli": bernoulli_attack_stats(model, provider, _split(corpus, cfg.train_split), refs,
                                                     args.samples, _seed(cfg), cfg.workers)}
    elif kind == "images":
        stats = {"images": image_attack_stats(model, provider, refs, _split(corpus, cfg.attack_split), cfg.workers)}
    else:
        stats = guessing_attack(model, provider, refs, _split(corpus, cfg.attack_split), _seed(cfg),
                                workers=cfg.workers)
    doc = {"kind": kind, "variant": model.params.variant, "lambda": model.params.lam, "tau_used": list(model.taus),
           "stats": {}}
    rows = [("kind", kind), ("variant", model.params.variant), ("lambda", model.params.lam)]
    for name, st in stats.items():
        d = st.to_dict()
        bits, bound = entropy_estimate(st.far, st.n_references * st.n_candidates)
        d["entropy_bits"] = bits
        d["entropy_is_bound"] = bound
        doc["stats"][name] = d
        rows += [(f"{name}.{k}", v) for k, v in d.items()]
    _write_reports(cfg.out, doc, _table(rows))
    return 0


def cmd_lsim(cfg: Config, args) -> int:
    model = _load_model(cfg)
    provider = _provider(cfg)
    pairs = build_pairs(_split(_corpus(cfg), cfg.split))
    doc = {"variant": model.params.variant, "lambda": model.params.lam}
    rows = [("variant", model.params.variant), ("lambda", model.params.lam)]
    for gran in ("per-bit", "whole-print"):
        res = lsim_verify(model, provider, pairs, gran, cfg.workers).to_dict()
        doc[gran] = res
        rows += [(f"{gran}.{k}", v) for k, v in res.items() if k != "granularity"]
    ang = angle_collision_check(model, provider, pairs).to_dict()
    doc["angles"] = ang
    rows += [(f"angles.{k}", v) for k, v in ang.items()]
    _write_reports(cfg.out, doc, _table(rows))
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "enroll": cmd_enroll, "auth": cmd_auth, "eval": cmd_eval,
            "attack": cmd_attack, "lsim": cmd_lsim}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with settings; flags override it")
    common.add_argument("--corpus", help="manifest CSV (id, object_id, split[, object_type])")
    common.add_argument("--embeddings", help="AILKEMB1 embedding file")
    common.add_argument("--whole", help="whole-image companion embedding file")
    common.add_argument("--model", help="model JSON")
    common.add_argument("--record", help="enrolment record JSON")
    common.add_argument("--out", help="output path")
    common.add_argument("--variant", choices=sorted(VARIANTS))
    common.add_argument("--seed", type=int, help="master seed (falls back to $AILOCK_SEED, then 0)")
    common.add_argument("--workers", type=int)
    common.add_argument("--split", help="evaluation split(s), comma separated")
    common.add_argument("--train-split", dest="train_split")
    common.add_argument("--attack-split", dest="attack_split")
    common.add_argument("--param.lambda", dest="param_lambda", type=int)
    common.add_argument("--param.tau", dest="param_tau", type=float)
    common.add_argument("--param.pc_lo", dest="param_pc_lo", type=int)
    common.add_argument("--param.pc_hi", dest="param_pc_hi", type=int)
    common.add_argument("--param.t", dest="param_t", type=int)

    ap = argparse.ArgumentParser(prog="ailock", description="Image-based credentials from DNN embeddings.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus and its embeddings")
    p.add_argument("--objects", type=int, default=255)
    p.add_argument("--captures", type=int, default=4)
    p.add_argument("--holdout", type=int, default=55)
    p.add_argument("--generated", type=int, default=2000)
    p.add_argument("--collision", type=float, default=0.79)

    p = sub.add_parser("train", parents=[common], help="k-fold threshold discovery; writes a model")
    p.add_argument("--folds", type=int)
    p.add_argument("--vaccine", choices=["none", "tau-only", "pca+tau"])
    p.add_argument("--vaccine-split", dest="vaccine_split")
    p.add_argument("--bernoulli-vaccine", dest="bernoulli_vaccine", type=int)
    p.add_argument("--selector", choices=["pca", "raw", "random"])
    p.add_argument("--fixed-tau", dest="fixed_tau", action="store_true", default=None,
                   help="skip threshold discovery and use --param.tau for every segment")
    p.add_argument("--lambdas", type=lambda s: [int(x) for x in s.split(",") if x],
                   help="comma-separated lambdas for the threshold table")

    for name, helptext in (("enroll", "lock a secret under an image"), ("auth", "unlock with a candidate image")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--id", required=True, help="item id in the embedding file")
        p.add_argument("--secondary-env", dest="secondary_env",
                       help="environment variable holding a second factor (password)")

    p = sub.add_parser("eval", parents=[common], help="FAR/FRR/F1/EER over all pairs of a split")
    p.add_argument("--mode", choices=["distance", "sketch"])

    p = sub.add_parser("attack", parents=[common], help="Bernoulli, generated-image or guessing attack")
    p.add_argument("--kind", choices=["bernoulli", "images", "guessing"], default="bernoulli")
    p.add_argument("--samples", type=int, default=10000)

    sub.add_parser("lsim", parents=[common], help="collision probabilities and rank test")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except CliError as exc:
        print(f"ailock {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"ailock {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
