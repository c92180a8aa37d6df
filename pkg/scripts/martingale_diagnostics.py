"""Martingale diagnostics across n: mean of Y, V_n^2 spread, Hall-Heyde L_n, Azuma check."""
import argparse

from ewens_pitman.martingale import azuma_bound, simulate_martingale
from ewens_pitman.model import ScalingParams


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--replicates", type=int, default=10_000)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=13)
    args = p.parse_args()
    s = ScalingParams(args.alpha, args.lam)
    print(f"{'n':>6} {'E Y_n':>9} {'se':>8} {'E V2':>8} {'Var V2':>9} {'L_n':>9} "
          f"{'P(dev>eps)':>10} {'azuma 1-time':>12}")
    for n in (250, 1000, 4000):
        r = simulate_martingale(s, n, args.replicates, args.seed)
        frac = float((r.max_deviation > args.eps).mean())
        print(f"{n:6d} {r.mean_y_end:9.5f} {r.se_y_end:8.1e} {r.v2_mean:8.5f} {r.v2_var:9.2e} "
              f"{r.hall_heyde.ln:9.5f} {frac:10.4f} {azuma_bound(s, n, args.eps).single_time:12.3g}")


if __name__ == "__main__":
    main()
