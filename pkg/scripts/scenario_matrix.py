#!/usr/bin/env python3
"""Run every scenario config in a directory and tabulate the property verdicts."""

import argparse
import sys
from pathlib import Path

from sracare.scenario import ConfigError, load_config, run_scenario, write_outputs

PROPS = [f"A{i}" for i in range(1, 13)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("directory", nargs="?", default=str(Path(__file__).resolve().parent.parent / "scenarios"))
    ap.add_argument("--out-dir", help="also write trace/report/verdict files here")
    args = ap.parse_args(argv)

    paths = sorted(Path(args.directory).glob("*.ini"))
    if not paths:
        print(f"no .ini files in {args.directory}", file=sys.stderr)
        return 2
    print(f"{'scenario':<18} " + " ".join(f"{p:>3}" for p in PROPS))
    for path in paths:
        try:
            cfg = load_config(path)
            run = run_scenario(cfg)
        except ConfigError as exc:
            print(f"{path.stem:<18} config error: {exc}")
            continue
        failing = run.failing()
        print(f"{cfg.name:<18} " + " ".join(f"{'x' if p in failing else '.':>3}" for p in PROPS))
        if args.out_dir:
            write_outputs(run, args.out_dir, cfg.name)
    print("(. = pass, x = fail)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
