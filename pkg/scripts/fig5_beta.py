"""Calibrated beta against D/r0 (mean and std over trials), written as CSV."""

import argparse
import csv

from turbmit.theory import CalibrationSetup, calibrate_beta


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ratios", default="0.25,0.5,1,2,3,4")
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="fig5_beta.csv")
    args = ap.parse_args()
    setup = CalibrationSetup(base_seed=args.seed)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["d_over_r0", "beta_mean", "beta_std"])
        for r in map(float, args.ratios.split(",")):
            c = calibrate_beta(r, args.eps, args.trials, setup)
            w.writerow([r, c.beta, c.std])
            print(f"D/r0={r:<5g} beta={c.beta:.4g} +- {c.std:.3g}", flush=True)


if __name__ == "__main__":
    main()
