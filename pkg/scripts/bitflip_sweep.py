#!/usr/bin/env python3
"""Flip every stored bit of a framed image, one secure boot per flip.

Prints a summary of boot outcomes and exits non-zero if any flip went
undetected or was recovered into anything other than the golden flash.
"""

import argparse
import collections
import sys
import time

from sracare.experiments import bitflip_sweep, make_testbed


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--app-size", type=int, default=1748, help="application size in octets (default: 2 frames)")
    ap.add_argument("--seed", type=int, default=5, help="seed for the random application binary")
    args = ap.parse_args(argv)

    bed = make_testbed(args.app_size, seed=args.seed)
    counts = collections.Counter()
    bad = []
    t0 = time.perf_counter()
    for trial in bitflip_sweep(bed):
        _, _, frame = bed.bit_location(trial.label)
        out = trial.outcome
        counts[out.status.name] += 1
        if out.frames_recovered != [frame] or trial.flash_after != bed.flash:
            bad.append(trial.label)
    elapsed = time.perf_counter() - t0
    total = sum(counts.values())
    print(f"frames: {bed.layout.image_frames}  stored bits: {bed.stored_bits()}")
    for status, n in sorted(counts.items()):
        print(f"  {status:<10} {n}")
    print(f"flips not recovered to golden: {len(bad)}")
    print(f"{total} boots in {elapsed:.1f} s ({1e3 * elapsed / max(total, 1):.3f} ms/boot)")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
