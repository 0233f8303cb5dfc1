#!/usr/bin/env python3
"""Run the bounded model checker over a range of depths and adversary powers."""

import argparse
import itertools
import sys
import time

from sracare.modelcheck import POWERS, format_action, model_check


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-depth", type=int, default=8)
    ap.add_argument("--keys", choices=("honest", "leaked"), default="honest")
    ap.add_argument("--all-subsets", action="store_true",
                    help="sweep every subset of powers instead of only the full set")
    args = ap.parse_args(argv)

    if args.all_subsets:
        subsets = [frozenset(c) for r in range(len(POWERS) + 1)
                   for c in itertools.combinations(sorted(POWERS), r)]
    else:
        subsets = [POWERS]
    status = 0
    print(f"{'powers':<28} {'depth':>5} {'states':>10} {'secs':>7}  verdict")
    for powers in subsets:
        for depth in range(1, args.max_depth + 1):
            t0 = time.perf_counter()
            res = model_check(depth, powers, args.keys)
            label = ",".join(sorted(powers)) or "-"
            print(f"{label:<28} {depth:>5} {res.states:>10} {time.perf_counter() - t0:>7.2f}  {res.verdict}")
            if not res.holds:
                status = 1
                for i, action in enumerate(res.counterexample, 1):
                    print(f"    {i}. {format_action(action)}")
                break
    return status


if __name__ == "__main__":
    sys.exit(main())
