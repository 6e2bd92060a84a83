"""Coverage of 99% bootstrap intervals for the misspecified OU experiment.

Runs the eight (n, T, k, noise) settings and prints them next to the
published coverage rates.  Usage:

    python scripts/reproduce_coverage_table.py --paths 1000 --reps 1000 --out results/
"""

import argparse
import logging
from pathlib import Path

from sdeboot.experiment import ExperimentConfig, run_coverage, write_report

# (n, T, k) -> (Gaussian noise, bilateral gamma noise)
PUBLISHED = {
    (100_000, 500.0, 25): (0.962, 0.952),
    (100_000, 500.0, 50): (0.969, 0.944),
    (50_000, 200.0, 25): (0.935, 0.924),
    (50_000, 200.0, 50): (0.939, 0.907),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)

    print(f"{'n':>7} {'T':>5} {'k':>3} {'noise':>7} {'coverage':>9} {'published':>9} {'width':>8} {'sec':>6}")
    for (n, T, k), published in PUBLISHED.items():
        for noise, ref in zip(("wiener", "bgamma"), published):
            cfg = ExperimentConfig(noise=noise, n=n, T=T, k=k, paths=args.paths,
                                   reps=args.reps, seed=args.seed, threads=args.threads)
            rep = run_coverage(cfg)
            print(f"{n:>7} {T:>5.0f} {k:>3} {noise:>7} {rep.coverage:>9.3f} {ref:>9.3f} "
                  f"{rep.mean_width:>8.4f} {rep.wall_time:>6.1f}", flush=True)
            if args.out:
                write_report(rep, args.out / f"coverage_n{n}_T{T:g}_k{k}_{noise}.json")


if __name__ == "__main__":
    main()
