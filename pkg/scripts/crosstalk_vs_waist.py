"""Near-axis back-projection crosstalk of the binary masks against fiber waist.

The crosstalk is the density-matrix sum over |k_r| <= 14 rad/mm excluding
both diagonals, from a k_r scan at l = 0. Prints one row per waist.

    python scripts/crosstalk_vs_waist.py [--n 1024] [--waists 0.46 0.6 0.8 1.0]
"""

import argparse

from besselspdc.fields import GridSpec, MaskKind, ModeParams
from besselspdc.klyshko import AXIS_KR, default_system, scan_density

KR = [float(k) for k in range(-35, 36, 7)]


def crosstalk(kind, waist, grid):
    system = default_system(grid, waist)
    dm = scan_density(system, kind, AXIS_KR, KR, KR, ModeParams(0, 0.0, waist))
    return dm.off_diagonal_sum(14)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--width", type=float, default=8.0)
    p.add_argument("--waists", type=float, nargs="+", default=[0.46, 0.6, 0.8, 1.0])
    args = p.parse_args()
    grid = GridSpec(args.n, args.width)
    print("waist_mm,binary_axicon,binary_bessel,bessel_lower")
    for w in args.waists:
        a = crosstalk(MaskKind.BINARY_AXICON, w, grid)
        b = crosstalk(MaskKind.BINARY_BESSEL, w, grid)
        print(f"{w:g},{a:.4f},{b:.4f},{b < a}")


if __name__ == "__main__":
    main()
