"""FWHM bias of the derivative-of-Gaussian model on an exact dispersive pull.

The dispersive response of a Gaussian line is a Dawson function. Fitting it
with the derivative-of-Gaussian shape overestimates the FWHM by an amount that
depends on how far into the tails the data extend.
"""

import argparse
import math

import numpy as np
from scipy.special import dawsn

from doubleres.ensemble import FWHM_TO_SIGMA
from doubleres.fitlab import fit_gaussian_derivative


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fwhm", type=float, default=47.4e6)
    ap.add_argument("--points", type=int, default=801)
    args = ap.parse_args()
    sigma = args.fwhm * FWHM_TO_SIGMA
    print("window(sigma)  fitted/true FWHM  extremum separation/sigma")
    for k in (2, 3, 4, 5, 6, 8, 10):
        x = np.linspace(-k * sigma, k * sigma, args.points)
        fit = fit_gaussian_derivative(x, dawsn(x / (math.sqrt(2) * sigma)))
        print(f"{k:13d}  {fit['fwhm'] / args.fwhm:16.4f}  {fit['extremum_separation'] / sigma:10.4f}")
    # extrema of D(x / sqrt 2 sigma) sit where 1 - 2 u D(u) = 0
    u = np.linspace(0.5, 1.5, 200001)
    print(f"true extremum separation: {2 * math.sqrt(2) * u[np.argmin(np.abs(1 - 2 * u * dawsn(u)))]:.4f} sigma")


if __name__ == "__main__":
    main()
