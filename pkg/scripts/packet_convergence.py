"""Packet-sum dispersive pull against the closed form versus packet count and
homogeneous width, normalised by the peak pull over |detuning| <= 3 sigma."""

import argparse

import numpy as np

from doubleres.ensemble import FWHM_TO_SIGMA, EnsembleCoupling, InhomProfile, discretize, dispersive_pull, gaussian_self_energy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fwhm", type=float, default=47.8e6)
    ap.add_argument("--counts", type=int, nargs="+", default=[1024, 4096, 16384, 65536])
    ap.add_argument("--widths", type=float, nargs="+", default=[1e3, 1e5, 3e5, 1e6, 4.78e6])
    args = ap.parse_args()
    prof = InhomProfile(0.0, args.fwhm)
    sigma = args.fwhm * FWHM_TO_SIGMA
    d = np.linspace(-3 * sigma, 3 * sigma, 1201)
    print("n       " + "  ".join(f"gam={w:8.3g}" for w in args.widths) + "    (vs Dawson)")
    dawson = -np.imag(gaussian_self_energy(1.0, args.fwhm, d))
    for n in args.counts:
        row = []
        for w in args.widths:
            pull = dispersive_pull(EnsembleCoupling(1.0, discretize(prof, n, w)), d)
            row.append(np.max(np.abs(pull - dawson)) / np.max(np.abs(dawson)))
        print(f"{n:<7d} " + "  ".join(f"{e:12.3e}" for e in row))
    print("same, against the closed form including the homogeneous width:")
    for n in args.counts:
        row = []
        for w in args.widths:
            ref = -np.imag(gaussian_self_energy(1.0, args.fwhm, d, w))
            pull = dispersive_pull(EnsembleCoupling(1.0, discretize(prof, n, w)), d)
            row.append(np.max(np.abs(pull - ref)) / np.max(np.abs(ref)))
        print(f"{n:<7d} " + "  ".join(f"{e:12.3e}" for e in row))


if __name__ == "__main__":
    main()
