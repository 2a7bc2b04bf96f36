"""Histogram data for the OMP coefficients of a simulated PSF corpus."""

import argparse
import csv

import numpy as np

from turbmit.deconv import estimate_prior, generate_psf_corpus, train_basis


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=2000)
    ap.add_argument("--m", type=int, default=8)
    ap.add_argument("--tau", type=float, default=1e-6)
    ap.add_argument("--bins", type=int, default=61)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="fig9_prior.csv")
    args = ap.parse_args()
    corpus = generate_psf_corpus(args.count, seed=args.seed)
    basis = train_basis(corpus, args.m)
    prior = estimate_prior(corpus, basis, args.tau)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["channel", "bin_centre", "density", "laplace_scale", "excess_kurtosis"])
        for i in range(basis.m):
            dens, edges = np.histogram(prior.weights[:, i], bins=args.bins, density=True)
            for c, v in zip(0.5 * (edges[1:] + edges[:-1]), dens):
                w.writerow([i, c, v, prior.d[i], prior.excess_kurtosis[i]])
    print(f"{prior.heavy_tailed}/{basis.m} channels with positive excess kurtosis")


if __name__ == "__main__":
    main()
