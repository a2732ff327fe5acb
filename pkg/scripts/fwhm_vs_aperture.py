"""Spiral bandwidth of each mask kind with a Fourier-plane aperture.

Without an aperture every phase-only mask gives a flat coincidence spectrum,
so the FWHM is infinite. A hard circular aperture (rad/mm, SLM plane) in the
SLM-crystal relays removes high radial orders and makes the widths finite.

    python scripts/fwhm_vs_aperture.py [--kr 21] [--cutoffs 60 100] [--ell 40]
"""

import argparse

from besselspdc.fields import GridSpec, MaskKind
from besselspdc.klyshko import spiral_bandwidth


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--kr", type=float, default=21.0)
    p.add_argument("--cutoffs", type=float, nargs="+", default=[60.0, 100.0])
    p.add_argument("--ell", type=int, default=40)
    p.add_argument("--n", type=int, default=512)
    args = p.parse_args()
    grid = GridSpec(args.n, 4.0)
    kinds = list(MaskKind)
    print("cutoff," + ",".join(k.value for k in kinds))
    for c in args.cutoffs:
        widths = [spiral_bandwidth(k, args.kr, args.ell, cutoff=c, grid=grid).fwhm for k in kinds]
        print(f"{c:g}," + ",".join(f"{w:.2f}" for w in widths))


if __name__ == "__main__":
    main()
