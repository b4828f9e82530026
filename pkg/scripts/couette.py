"""Planar Couette flow of the Ar-Kr mixture at desk scale.

    python scripts/couette.py --case 1 --M 16 --M0 5 --t-end 10 --out results/couette1
"""
import argparse
import logging
from pathlib import Path

import numpy as np

from hermite_boltzmann.moments import moments_batch
from hermite_boltzmann.runner import RunManifest, run_spatial
from hermite_boltzmann.scenarios import build_case, with_solver
from hermite_boltzmann.tensor import TensorCache


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--case", type=int, default=1)
    ap.add_argument("--M", type=int, default=16)
    ap.add_argument("--M0", type=int, default=5)
    ap.add_argument("--t-end", type=float, default=10.0)
    ap.add_argument("--every", type=float, default=2.0, help="snapshot interval")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--cache-dir", default="cache")
    ap.add_argument("--out", default="results/couette")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = with_solver(build_case("couette", args.case), M=args.M, M0=args.M0, t_end=args.t_end,
                      output_every=args.every)
    out = Path(args.out)
    manifest = RunManifest(cfg.to_dict())

    def progress(step, grid):
        if step % 500 == 0:
            logging.info("step %d  t = %.3f", step, grid.time)

    grid, _ = run_spatial(cfg, TensorCache(args.cache_dir), out, args.threads, manifest, progress=progress)
    (out / "manifest.json").write_text(manifest.to_json())
    u0 = cfg.scales["u0"]
    for i, (f, c) in enumerate(zip(grid.f, grid.centers)):
        m = moments_batch(f, c.u_array, c.T, grid.masses[i])
        print(f"species {i + 1} u2 [m/s]:", np.array2string(m["u"][:, 1] * u0, precision=2, max_line_width=120))
    d = manifest.diagnostics
    print(f"{d['steps']} steps; wall mass flux {d['max_wall_mass_flux']:.1e}; "
          f"collision {manifest.timings['collision_s']:.1f}s, convection {manifest.timings['convection_s']:.1f}s")


if __name__ == "__main__":
    main()
