"""Kolmogorov distance of standardised K_n to the normal, and the fitted log-log rate.

    python scripts/clt_rates.py --alpha 0 --alpha 0.5 --replicates 50000
"""
import argparse

from ewens_pitman.model import ScalingParams
from ewens_pitman.stats import clt_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--n", type=int, action="append")
    p.add_argument("--replicates", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=6)
    args = p.parse_args()
    n_values = args.n or [250, 1000, 4000]
    for alpha in args.alpha or [0.0, 0.5]:
        rep = clt_experiment(ScalingParams(alpha, args.lam), n_values, args.replicates, args.seed)
        print(f"lambda={args.lam} alpha={alpha} replicates={args.replicates}")
        for n, ks in zip(rep.n_values, rep.ks):
            print(f"  n={n:>7d}  KS={ks:.5f}  sqrt(n)*KS={ks * n ** 0.5:.3f}")
        print(f"  fitted slope {rep.fitted_slope:.3f}")


if __name__ == "__main__":
    main()
