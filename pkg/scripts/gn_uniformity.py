"""Refined Gagliardo-Nirenberg constant over a seeded random ensemble."""
import argparse

import numpy as np

from torusgpe.core3d import Grid3D, Model3D
from torusgpe.minimizer3d import gnCheck
from torusgpe.potentials import PotentialSpec


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--omegas", type=float, nargs="+", default=[64, 256, 1024])
    ap.add_argument("--size", type=int, default=200)
    ap.add_argument("--seed", type=int, default=2024)
    a = ap.parse_args()
    C = []
    for om in a.omegas:
        r = gnCheck(a.size, Model3D(Grid3D.make(om), PotentialSpec("Quadratic", om)), a.seed)
        C.append(r["C_GN"])
        q = np.quantile(r["ratios"], [0.5, 0.9])
        print(f"omega {om:6g}: C_GN {r['C_GN']:.5f}  median {q[0]:.5f}  90% {q[1]:.5f}")
    print(f"max/min across omega: {max(C) / min(C):.3f}")


if __name__ == "__main__":
    main()
