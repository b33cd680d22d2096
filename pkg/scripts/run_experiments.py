#!/usr/bin/env python3
"""Run the bundled studies and drop one CSV per seed under results/.

By default runs all four studies at their full configurations, which takes
a few minutes; pass study names to run a subset.
"""

import argparse
import sys

from trafficmarket.experiments import EXPERIMENTS, run_experiment


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "studies", nargs="*", metavar="study",
        help=f"studies to run (default: all of {', '.join(sorted(EXPERIMENTS))})",
    )
    parser.add_argument("--trials", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="results")
    parser.add_argument("--parallel", action="store_true")
    args = parser.parse_args(argv)

    names = args.studies or sorted(EXPERIMENTS)
    unknown = [n for n in names if n not in EXPERIMENTS]
    if unknown:
        parser.error(f"unknown studies: {', '.join(unknown)}")
    seeds = range(args.seed, args.seed + args.trials)
    for name in names:
        for path in run_experiment(
            name, seeds, out_dir=args.out_dir, parallel=args.parallel
        ):
            print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
