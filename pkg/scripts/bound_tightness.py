"""How loose is the certified recovery bound?

For small certified problems, runs Lasso trials over a lambda grid and reports
the ratio ||x* - x_nat|| / (C0 ||x_nat - a||_1 + C1 lambda). Ratios must stay
at or below 1; how far below shows the slack in the constants.
"""
import argparse
import csv
import sys

from rwidth.harness import TrialConfig, expand_trials, run_experiment, trial_seed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--k", type=int, default=1)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.01, 0.03, 0.1, 0.3, 1.0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = csv.writer(sys.stdout)
    out.writerow(["lambda", "trials", "certified", "pass_rate", "ratio_mean", "ratio_max"])
    for j, lam in enumerate(args.lambdas):
        base = TrialConfig(m=args.m, n=args.n, k=args.k, lam=lam, matrix_seed=args.seed)
        s = run_experiment(expand_trials(base, args.trials, trial_seed(args.seed, j)))
        certified = sum(1 for r in s.records if r.bound_ok is not None)
        out.writerow([lam, s.n_trials, certified, f"{s.pass_rate:.3f}",
                      f"{s.tightness_mean:.4g}" if s.tightness_mean is not None else "",
                      f"{s.tightness_max:.4g}" if s.tightness_max is not None else ""])


if __name__ == "__main__":
    main()
