"""Transverse eigenvalue asymptotics over an omega sweep.

Prints |lambda - 1|, the gap error and the profile distances for the
Quadratic and GaussianRing traps, with fitted log-log rates, and writes
the ground-state profiles as CSV.
"""
import argparse
import math
from pathlib import Path

from torusgpe.cli_support import fitRate
from torusgpe.potentials import PotentialSpec
from torusgpe.transverse import RadialGrid, groundStateConvergence, solveTransverse


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--omegas", type=float, nargs="+", default=[16, 64, 256, 1024])
    ap.add_argument("--N-s", dest="N_s", type=int, default=1024)
    ap.add_argument("--out", default="out/transverse")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    for variant in ("Quadratic", "GaussianRing"):
        rows = []
        for om in a.omegas:
            r = solveTransverse(RadialGrid.make(om, a.N_s), PotentialSpec(variant, om))
            r.to_csv(out / f"{variant}_omega{om:g}.csv")
            c = groundStateConvergence(r)
            rows.append((om, abs(r.lam - 1), abs(r.lam_prime - r.lam - 2), c["l2_err"], c["l4_err"]))
        print(f"{variant}")
        print(f"{'omega':>8} {'|lam-1|':>12} {'|gap-2|':>12} {'l2_err':>12} {'l4_err':>12}")
        for row in rows:
            print(f"{row[0]:8g} " + " ".join(f"{x:12.4e}" for x in row[1:]))
        for j, name in enumerate(("|lam-1|", "|gap-2|", "l2_err", "l4_err"), start=1):
            slope, _, res = fitRate([r[0] for r in rows], [r[j] for r in rows])
            print(f"  rate of {name}: {slope:.3f} (residual {res:.3f})")


if __name__ == "__main__":
    main()
