"""Compare simulated K_n / n with the limit m over a lambda x alpha grid."""
import argparse

import numpy as np

from ewens_pitman.asymptotics import constants, exact_mean_k
from ewens_pitman.model import ScalingParams, sample_k_batch


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    print(f"{'lambda':>7} {'alpha':>6} {'m':>10} {'E K/n':>10} {'mean K/n':>10} {'max dev':>9}")
    for lam in (0.5, 1.0, 2.0):
        for alpha in (0.0, 0.25, 0.5, 0.75):
            s = ScalingParams(alpha, lam)
            m = constants(s).m
            ratio = sample_k_batch(s, args.n, args.replicates, args.seed) / args.n
            exact = exact_mean_k(s.at(args.n), args.n) / args.n
            print(f"{lam:7.2f} {alpha:6.2f} {m:10.6f} {exact:10.6f} {ratio.mean():10.6f} "
                  f"{np.abs(ratio - m).max():9.2e}")


if __name__ == "__main__":
    main()
