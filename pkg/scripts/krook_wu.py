"""Homogeneous Krook-Wu runs: two species (default) or the s-species family.

    python scripts/krook_wu.py --species 2 --out results/kw2
    python scripts/krook_wu.py --species 5 --t-end 1 --out results/kw5
"""
import argparse
import logging
import warnings
from pathlib import Path

from hermite_boltzmann.runner import RunManifest, run_krook_wu
from hermite_boltzmann.scenarios import build_case, with_solver
from hermite_boltzmann.tensor import TensorCache


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--species", type=int, default=2)
    ap.add_argument("--M", type=int, default=20)
    ap.add_argument("--M0", type=int, default=10)
    ap.add_argument("--t-end", type=float)
    ap.add_argument("--cache-dir", default="cache")
    ap.add_argument("--out", default="results/krook_wu")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    warnings.filterwarnings("ignore", message="Krook-Wu solution is not positive")

    cfg = build_case("krook_wu", args.species)
    changes = {"M": args.M, "M0": args.M0}
    if args.t_end is not None:
        changes["t_end"] = args.t_end
    cfg = with_solver(cfg, **changes)
    out = Path(args.out)
    manifest = RunManifest(cfg.to_dict())
    run_krook_wu(cfg, TensorCache(args.cache_dir), out, manifest, record_every=10)
    (out / "manifest.json").write_text(manifest.to_json())
    d = manifest.diagnostics
    print(f"max relative error of f_400: {d['f400_max_rel_error']:.3e}")
    for i, (E, Ew) in enumerate(zip(d["E"], d["E_w"])):
        print(f"species {i + 1}: E = {E:.3e}  E_w = {Ew:.3e}")
    print(f"integration {manifest.timings['integrate_s']:.1f}s, results in {out}")


if __name__ == "__main__":
    main()
