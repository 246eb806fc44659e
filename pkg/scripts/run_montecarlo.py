#!/usr/bin/env python3
"""Run the six-design Monte Carlo study and print the three summary tables
(LATE, first stage, error rates) in bias / SD / RMSE / CP format.

Example:
    python3 scripts/run_montecarlo.py --n 1000 --reps 500 --seed 2024
"""
import argparse
import sys

from mislate.simulation import DesignSpec, run_study


def fmt(x):
    return f"{x: .3f}"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--designs", type=int, nargs="+", default=list(range(1, 7)))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    studies = {}
    for d in args.designs:
        studies[d] = run_study(DesignSpec(d), n=args.n, reps=args.reps,
                               seed=args.seed, workers=args.workers)
        print(f"design {d}: done ({studies[d].n_failed} failed reps)",
              file=sys.stderr)

    blocks = [
        ("LATE (beta*)", [("gmm", "beta_star"), ("iv", "beta_star")]),
        ("first stage (delta p*)", [("gmm", "delta_p_star"),
                                    ("ols", "delta_p_star")]),
        ("error rates", [("gmm", "m0"), ("gmm", "m1")]),
    ]
    for title, rows in blocks:
        print(f"\n== {title} ==  n={args.n} reps={args.reps} seed={args.seed}")
        print(f"{'design':>6} {'estimator':>9} {'param':>12} "
              f"{'true':>7} {'bias':>7} {'sd':>7} {'rmse':>7} {'cp':>7}")
        for d in args.designs:
            for est, param in rows:
                r = studies[d].row(param, est)
                print(f"{d:>6} {est:>9} {param:>12} {fmt(r.true)} "
                      f"{fmt(r.bias)} {fmt(r.sd)} {fmt(r.rmse)} {fmt(r.cp)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
