"""Emit plot data for every figure id into one directory.

    python scripts/run_figures.py --out results/ [--set KEY=VALUE ...]
"""

import argparse
import sys
import time

from besselspdc import harness


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--only", nargs="*", choices=harness.FIGURES)
    args = p.parse_args(argv)
    for fig in args.only or harness.FIGURES:
        t = time.perf_counter()
        code = harness.main(["--out", args.out, *sum((["--set", s] for s in args.set), []), "figure", "--id", fig])
        print(f"{fig}: exit {code} in {time.perf_counter() - t:.1f} s", file=sys.stderr)
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
