"""Command-line entry point.

Exit codes: 0 when every check passes, 1 on a property failure or a
model-checker counterexample, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import ltl
from .device import DeviceError
from .frames import FrameError, build_image, dumps_image, loads_image, verify_frame
from .modelcheck import DEFAULT_CEILING, POWERS, DepthExceeded, format_action, model_check
from .properties import format_report
from .scenario import ConfigError, load_config, run_scenario, write_outputs
from .trace import Trace, TraceError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _err(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _key(text: str) -> bytes:
    try:
        key = bytes.fromhex(text)
    except ValueError:
        raise ValueError(f"key is not valid hex: {text!r}")
    if not key:
        raise ValueError("key is empty")
    return key


def cmd_build_image(args) -> int:
    try:
        key = _key(args.key)
        binary = Path(args.binary).read_bytes()
        frames = build_image(key, binary)
    except (OSError, ValueError, FrameError) as exc:
        return _err(str(exc))
    Path(args.out).write_bytes(dumps_image(frames))
    print(f"{len(frames)} frames written")
    return EXIT_OK


def cmd_verify_image(args) -> int:
    try:
        key = _key(args.key)
        frames = loads_image(Path(args.image).read_bytes())
    except (OSError, ValueError, FrameError) as exc:
        return _err(str(exc))
    bad = [k for k, f in enumerate(frames) if not verify_frame(key, f, expected_number=k)]
    for k in range(len(frames)):
        print(f"frame {k} {'fail' if k in bad else 'pass'}")
    return EXIT_FAIL if bad else EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.scenario)
    except ConfigError as exc:
        return _err(str(exc))
    t0 = time.perf_counter()
    try:
        run = run_scenario(cfg)
    except (ValueError, OSError, DeviceError) as exc:
        return _err(f"scenario {cfg.name}: {exc}")
    elapsed = time.perf_counter() - t0
    paths = write_outputs(run, args.out_dir, cfg.name)
    sys.stdout.write(format_report(run.verdicts, f"scenario {cfg.name}"))
    print(f"# trace {paths['trace']}  report {paths['report']}  ({elapsed:.3f} s)")
    return EXIT_OK if run.all_pass else EXIT_FAIL


def cmd_model_check(args) -> int:
    powers = POWERS if args.powers is None else frozenset(p for p in args.powers.split(",") if p)
    try:
        res = model_check(args.depth, powers, args.keys, ceiling=args.ceiling)
    except DepthExceeded as exc:
        return _err(str(exc))
    except ValueError as exc:
        return _err(str(exc))
    print(f"states explored: {res.states}")
    if res.holds:
        print(f"no counterexample up to depth {res.depth}")
        return EXIT_OK
    print(f"counterexample ({len(res.counterexample)} steps):")
    for i, action in enumerate(res.counterexample, 1):
        print(f"  {i}. {format_action(action)}")
    return EXIT_FAIL


def cmd_ltl_eval(args) -> int:
    try:
        trace = Trace.loads(Path(args.trace).read_text())
        formula = ltl.parse(args.formula)
        res = ltl.eval_ltl(formula, trace)
    except (OSError, TraceError, ltl.LtlError) as exc:
        return _err(str(exc))
    if res.holds:
        print("holds")
        return EXIT_OK
    print(f"violated (witness #{res.witness})")
    return EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sracare", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-image", help="frame a raw binary")
    p.add_argument("binary")
    p.add_argument("--key", required=True, help="hex key")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_image)

    p = sub.add_parser("verify-image", help="check every frame of a framed image")
    p.add_argument("image")
    p.add_argument("--key", required=True)
    p.set_defaults(func=cmd_verify_image)

    p = sub.add_parser("run", help="run a scenario config and report A1-A12")
    p.add_argument("scenario", help="path, or name inside $SRACARE_CONFIG_DIR")
    p.add_argument("--out-dir", default=".", help="where trace/report/verdict files go")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("model-check", help="bounded search for authentication counterexamples")
    p.add_argument("--depth", type=int, default=DEFAULT_CEILING)
    p.add_argument("--ceiling", type=int, default=DEFAULT_CEILING)
    p.add_argument("--powers", default=None,
                   help="comma list from drop,replay,tamper_1bit (default: all; '' for none)")
    p.add_argument("--keys", choices=("honest", "leaked"), default="honest")
    p.set_defaults(func=cmd_model_check)

    p = sub.add_parser("ltl-eval", help="evaluate a formula against a trace file")
    p.add_argument("trace")
    p.add_argument("formula")
    p.set_defaults(func=cmd_ltl_eval)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
