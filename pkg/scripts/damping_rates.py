"""Tail damping rate of the hybrid model against the quadratic order M0."""
import argparse

import numpy as np

from hermite_boltzmann.scenarios import GasMixtureSpec
from hermite_boltzmann.tensor import KernelSpec, assemble_tensor


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-order", type=int, default=8)
    ap.add_argument("--model", choices=["constant", "vss", "vhs", "hs"], default="constant")
    args = ap.parse_args()
    if args.model == "constant":
        kern, r = KernelSpec.constant(1 / (4 * np.pi)), 2.0
    else:
        spec = GasMixtureSpec.ar_kr(args.model, 1.68e21)
        kern = spec.kernel(0, 1)
        r = spec.species_masses[1] / spec.species_masses[0]
    print("M0  damping rate")
    for M0 in range(1, args.max_order + 1):
        t = assemble_tensor(M0, r, kern)
        print(f"{M0:2d}  {t.damping_rate:.6f}")


if __name__ == "__main__":
    main()
