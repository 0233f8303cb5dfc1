#!/usr/bin/env python3
"""Random single-frame corruptions: check recovery restores the golden image
and that the recovered frames refuse unprivileged writes afterwards."""

import argparse
import sys

from sracare.experiments import denied, make_testbed, recovery_trials
from sracare.secureboot import BootStatus


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--app-size", type=int, default=5734)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("-v", "--verbose", action="store_true", help="one line per trial")
    args = ap.parse_args(argv)

    bed = make_testbed(args.app_size)
    recovered = locked = 0
    for t in recovery_trials(bed, args.trials, seed=args.seed):
        ok_rec = t.outcome.status is BootStatus.RECOVERED and t.flash_after == bed.flash
        ok_lock = bool(t.probes) and all(denied(v) and same for _, v, same in t.probes)
        recovered += ok_rec
        locked += ok_lock
        if args.verbose:
            print(f"trial {t.label[0]:4d} frame {t.label[1]} {t.outcome.status.name:<10} "
                  f"golden={'yes' if ok_rec else 'NO'} locked={'yes' if ok_lock else 'NO'}")
    print(f"recovered to golden: {recovered}/{args.trials}")
    print(f"locks enforced:      {locked}/{args.trials}")
    return 0 if recovered == locked == args.trials else 1


if __name__ == "__main__":
    sys.exit(main())
