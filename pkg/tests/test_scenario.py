from pathlib import Path

import pytest

from sracare.scenario import (CONFIG_DIR_ENV, ConfigError, load_config, parse_config,
                              resolve_config_path, run_scenario, write_outputs)
from sracare.trace import EventKind

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def test_parse_full_config(tmp_path):
    (tmp_path / "attack.txt").write_text("seed 3\ndrop msg=3\n")
    cfg = parse_config("""
[map]
rom = 0x00010000, 0x4000
ram = 0x20000000, 0x8000
flash = 0x30000000, 0x2400
chip_info = 0x00010000, 0x20
mmio.uart = 0x40000000, 0x100

[images]
app_size = 3000
app_seed = 4

[protocol]
key = 11223344556677881122334455667788
seed = 5
flag = 0
region = 0x10, 0x20
baud = 9600

[attack]
script = attack.txt
actions =
    tamper msg=2 bit=9
""", tmp_path)
    assert cfg.map.mmio == (("uart", cfg.map.mmio[0][1]),)
    assert cfg.app_size == 3000 and cfg.key == bytes.fromhex("11223344556677881122334455667788")
    assert cfg.flag == 0 and cfg.region.start == 0x10 and cfg.baud == 9600
    assert len(cfg.script.actions) == 2


@pytest.mark.parametrize("text", ["[protocol]\nflag = 2\n", "[protocol]\nkey = zz\n",
                                  "[attack]\nactions = teleport\n", "[map]\nrom = 1\n", "not ini"])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_dir_env(monkeypatch):
    monkeypatch.setenv(CONFIG_DIR_ENV, str(SCENARIOS))
    assert resolve_config_path("nominal") == SCENARIOS / "nominal.ini"
    with pytest.raises(ConfigError):
        resolve_config_path("no-such-scenario")


@pytest.mark.parametrize("name,failing", [
    ("nominal", set()), ("corrupt-flash", set()), ("attest", set()), ("tamper-auth", set()),
    ("irq-inject", {"A7", "A9"}), ("dma-inject", {"A9"}), ("debugger-attach", {"A9"}),
    ("redirect-boot", {"A1"}), ("bad-map", {"A1"}), ("key-region-read", {"A4"}),
])
def test_shipped_scenarios(name, failing):
    run = run_scenario(load_config(SCENARIOS / f"{name}.ini"))
    assert run.failing() == failing


def test_corrupt_flash_trace_has_recovery():
    run = run_scenario(load_config(SCENARIOS / "corrupt-flash.ini"))
    kinds = {e.kind for e in run.result.trace}
    assert {EventKind.RE_TRIGGER, EventKind.RE_REFLASH, EventKind.RE_LOCK} <= kinds
    assert run.result.device_after.flash == run.golden_flash


def test_outputs_byte_identical(tmp_path):
    cfg = SCENARIOS / "corrupt-flash.ini"
    a = write_outputs(run_scenario(load_config(cfg)), tmp_path / "a", "x")
    b = write_outputs(run_scenario(load_config(cfg)), tmp_path / "b", "x")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
