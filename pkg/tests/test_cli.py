import random
from pathlib import Path

import pytest

from sracare.cli import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
KEY = "00" * 32


def test_build_and_verify(tmp_path, capsys):
    binary = tmp_path / "app.bin"
    binary.write_bytes(random.Random(0).randbytes(5734))
    out = tmp_path / "app.img"
    assert main(["build-image", str(binary), "--key", KEY, "--out", str(out)]) == 0
    assert "6 frames written" in capsys.readouterr().out
    assert out.stat().st_size == 6 * 1064
    assert main(["verify-image", str(out), "--key", KEY]) == 0
    raw = bytearray(out.read_bytes())
    raw[1064 + 50] ^= 1
    out.write_bytes(bytes(raw))
    assert main(["verify-image", str(out), "--key", KEY]) == 1
    assert "frame 1 fail" in capsys.readouterr().out


def test_build_empty_binary(tmp_path):
    (tmp_path / "e").write_bytes(b"")
    assert main(["build-image", str(tmp_path / "e"), "--key", KEY, "--out", str(tmp_path / "o")]) == 2


def test_build_bad_key(tmp_path):
    (tmp_path / "b").write_bytes(b"x")
    assert main(["build-image", str(tmp_path / "b"), "--key", "xyz", "--out", str(tmp_path / "o")]) == 2


def test_run_nominal(tmp_path, capsys):
    assert main(["run", str(SCENARIOS / "nominal.ini"), "--out-dir", str(tmp_path)]) == 0
    assert "12/12 pass" in capsys.readouterr().out
    assert (tmp_path / "nominal.verdicts").read_text().count("pass") == 12


def test_run_irq_fails(tmp_path, capsys):
    assert main(["run", str(SCENARIOS / "irq-inject.ini"), "--out-dir", str(tmp_path)]) == 1
    side = (tmp_path / "irq-inject.verdicts").read_text().splitlines()
    assert "A7 fail" in side and "A9 fail" in side


def test_run_missing_config(tmp_path):
    assert main(["run", str(tmp_path / "missing.ini")]) == 2


def test_model_check_exit_codes(capsys):
    assert main(["model-check", "--depth", "0"]) == 0
    assert "no counterexample" in capsys.readouterr().out
    assert main(["model-check", "--depth", "6", "--keys", "leaked"]) == 1
    out = capsys.readouterr().out
    assert "counterexample" in out and "forge" in out
    assert main(["model-check", "--depth", "99"]) == 2
    assert main(["model-check", "--powers", "", "--depth", "12"]) == 0


def test_ltl_eval(tmp_path, capsys):
    assert main(["run", str(SCENARIOS / "irq-inject.ini"), "--out-dir", str(tmp_path)]) == 1
    trace = str(tmp_path / "irq-inject.trace")
    assert main(["ltl-eval", trace, "F RE_TRIGGER"]) == 1
    assert main(["ltl-eval", trace, "G (BOOT_START -> F BOOT_END)"]) == 0
    assert main(["ltl-eval", trace, "G (("]) == 2


def test_usage_error():
    assert main(["no-such-command"]) == 2
