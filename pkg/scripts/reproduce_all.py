"""Run every bundled figure scenario and report wall time per figure."""

import argparse
import time
from pathlib import Path

from doubleres.cli import reproduce
from doubleres.tasks import FIGURES


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="out")
    ap.add_argument("--jobs", type=int)
    ap.add_argument("figures", nargs="*", default=list(FIGURES))
    args = ap.parse_args()
    for fig in args.figures:
        t0 = time.perf_counter()
        files = reproduce(fig, Path(args.outdir) / fig, jobs=args.jobs)
        print(f"{fig:6s} {time.perf_counter() - t0:6.1f} s  " + " ".join(p.name for p in files))


if __name__ == "__main__":
    main()
