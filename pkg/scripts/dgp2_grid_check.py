"""DGP2 rejection rates under the default and the trimmed grid rule.

With continuous outcomes the default rule keeps every unique value up to
the 90th percentile, including far-left points where all three DFs sit
near zero. Their bootstrap scale is tiny and dominates the sup-t critical
value, so the test almost never rejects. Trimming the lower 10% of the
pooled sample brings the rate up near nominal (0.124 at 500 reps,
slightly above the target band).

Usage: python3 scripts/dgp2_grid_check.py [--n 1000] [--reps 500] [--boot 499]
"""

import argparse

from distdid.simlab import DGPConfig, run_mc


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--boot", type=int, default=499)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args(argv)
    print("grid        L2(DTT)  Rej(DTT)  MAD(ADTT)  L2(cDF)  cover(DTT)")
    for rule in ("simulation", "trimmed"):
        m = run_mc(DGPConfig(dgp=2, n=args.n, reps=args.reps, B=args.boot, seed=args.seed,
                             grid=rule))
        print(f"{rule:<11} {m.L2_dtt:<8.4f} {m.rej_dtt:<9.3f} {m.mad_adtt:<10.4f} "
              f"{m.L2_cdf:<8.4f} {m.cover_dtt:.3f}")


if __name__ == "__main__":
    main()
