"""Write a synthetic block-level panel shaped like a police-deployment study.

876 blocks observed in periods -3..-1 and 1..5 (period 0 is dropped), 37 of
them treated from period 1 on and the rest never treated. The outcome is a
theft rate on a quarter-unit scale, so it has heavy ties at zero.

Usage: python3 scripts/make_staggered_panel.py out.csv [--seed 0] [--effect 0.0]
"""

import argparse
import csv

import numpy as np

PERIODS = (-3, -2, -1, 1, 2, 3, 4, 5)


def make_panel(seed: int = 0, n_units: int = 876, n_treated: int = 37, effect: float = 0.0):
    """Rows ``(id, time, group, y)``; ``effect`` scales down treated post-period rates."""
    rng = np.random.default_rng(seed)
    treated = np.zeros(n_units, dtype=bool)
    treated[rng.choice(n_units, n_treated, replace=False)] = True
    rate = rng.gamma(0.6, 0.5, size=n_units)
    rows = []
    for j in range(n_units):
        for t in PERIODS:
            lam = rate[j] * (1.0 + 0.05 * t)
            if treated[j] and t >= 1:
                lam *= 1.0 - effect
            rows.append((f"b{j:04d}", t, "1" if treated[j] else "inf",
                         0.25 * rng.poisson(max(lam, 0.0))))
    return rows


def write_panel(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "time", "group", "y"])
        w.writerows(rows)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--effect", type=float, default=0.0)
    args = ap.parse_args(argv)
    write_panel(args.out, make_panel(args.seed, effect=args.effect))


if __name__ == "__main__":
    main()
