"""Measured shift std against PSF bandwidth over a D/r0 sweep, written as CSV."""

import argparse
import csv

import numpy as np

from turbmit.optics import ApertureSpec, OpticalConfig
from turbmit.phase_screen import TurbulenceParams
from turbmit.sim import isoplanatic_psfs
from turbmit.theory import measure_sigma_nu


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=60, help="PSFs per configuration")
    ap.add_argument("--configs", type=int, default=10)
    ap.add_argument("--out", default="fig7_sigma_nu.csv")
    args = ap.parse_args()
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["d_over_r0", "diameter", "sigma_px", "nu_px", "ratio"])
        for i, r in enumerate(np.linspace(0.5, 4.0, args.configs)):
            diameter = 0.2 if i % 2 == 0 else 0.15
            opt = OpticalConfig(ApertureSpec("circle", diameter), psf_size=31)
            p = TurbulenceParams(r0=diameter / r, crop_n=128, seed=100 + i)
            sigma, nu = measure_sigma_nu(isoplanatic_psfs(p, opt, args.count))
            w.writerow([r, diameter, sigma, nu, sigma / nu])
            print(f"D/r0={r:.2f} D={diameter} sigma/nu={sigma / nu:.3f}", flush=True)


if __name__ == "__main__":
    main()
