"""Shared setup for the experiment scripts."""
import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ailock.providers import CachingProvider, synth_object_provider  # noqa: E402


def parser(doc: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=doc)
    ap.add_argument("--seed", type=int, default=1, help="synthetic corpus seed")
    ap.add_argument("--generated", type=int, default=2000, help="look-alike images (split into ds1/ds2)")
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--json", help="also write the results here")
    return ap


def corpus(args):
    provider, corpus = synth_object_provider(seed=args.seed, n_generated=args.generated)
    return CachingProvider(provider), corpus


def emit(args, rows: list[dict], columns: list[str]):
    widths = {c: max(len(c), *(len(_fmt(r.get(c))) for r in rows)) for c in columns}
    print("  ".join(f"{c:>{widths[c]}}" for c in columns))
    for r in rows:
        print("  ".join(f"{_fmt(r.get(c)):>{widths[c]}}" for c in columns))
    if args.json:
        Path(args.json).write_text(json.dumps(rows, indent=2) + "\n")


def _fmt(v):
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.3e}" if 0 < abs(v) < 1e-3 else f"{v:.4f}"
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)
