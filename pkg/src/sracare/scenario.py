"""End-to-end scenario: build images, boot the device, run the handshake,
then secure boot (F=1) or attestation (F=0), with optional attacks, and
check A1-A12 on the result.

Config files are INI with sections ``[map]``, ``[reference_map]``
(optional, defaults to the platform map), ``[images]``, ``[protocol]`` and
``[attack]``::

    [images]
    app_size = 5734          # or: app = path/to/binary
    app_seed = 1

    [protocol]
    key = 000102...1f
    seed = 7
    flag = 1
    region = 0x0, 0x400      # flash-relative Saddr, L

    [attack]
    actions =
        corrupt_flash offset=0x500 xor=0x01
"""

from __future__ import annotations

import configparser
import os
import random
from dataclasses import dataclass, field
from pathlib import Path

from .adversary import AdversarialChannel, AttackScript, apply_script_to_device, parse_script
from .attestation import verify_report, attest_region
from .device import (DEFAULT_MAP, BootLayout, DeviceError, MemoryMap, RegionSpec, fire_pending,
                     init_device, init_peripherals, parse_int, parse_map, protect_key_region,
                     read_chip_info, write_mem)
from .frames import HEADER_SIZE, assemble_flash, assemble_rom, build_image, dumps_image, loads_image
from .properties import PropertyResult, ScenarioResult, check_properties, format_report, format_sidecar
from .protocol import (new_prover, new_verifier, prover_finish, run_handshake, send_command,
                       send_report, verifier_finish)
from .secureboot import DEFAULT_BAUD, secure_boot
from .trace import Trace

CONFIG_DIR_ENV = "SRACARE_CONFIG_DIR"
DEFAULT_KEY = bytes(range(32))
DEFAULT_CHIP_INFO = b"SRACARE-SOC-0001"
DEFAULT_APP_SIZE = 5734


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    map: MemoryMap = DEFAULT_MAP
    reference_map: MemoryMap = DEFAULT_MAP
    binary: bytes | None = None
    app_size: int = DEFAULT_APP_SIZE
    app_seed: int = 1
    chip_info: bytes = DEFAULT_CHIP_INFO
    key: bytes = DEFAULT_KEY
    key_offset: int = 0x40
    golden_offset: int = 0x400
    seed: int = 0
    flag: int = 1
    region: RegionSpec = RegionSpec(0, 1024)
    baud: int = DEFAULT_BAUD
    script: AttackScript = field(default_factory=AttackScript)

    def app_binary(self) -> bytes:
        if self.binary is not None:
            return self.binary
        return random.Random(self.app_seed).randbytes(self.app_size)


@dataclass
class ScenarioRun:
    result: ScenarioResult
    verdicts: list[PropertyResult]
    golden_flash: bytes

    @property
    def all_pass(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def failing(self) -> set[str]:
        return {v.property_id for v in self.verdicts if not v.passed}


# -- config --------------------------------------------------------------------

def _section_map(cp, section) -> MemoryMap | None:
    if not cp.has_section(section):
        return None
    text = "\n".join(f"{k} = {v}" for k, v in cp.items(section))
    return parse_map(text)


def _pair(text: str) -> tuple[int, int]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ConfigError(f"expected 'start, length', got {text!r}")
    return parse_int(parts[0]), parse_int(parts[1])


def parse_config(text: str, base_dir: Path | None = None, name: str = "scenario") -> ScenarioConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    base_dir = Path(base_dir or ".")
    cfg = ScenarioConfig(name=name)
    try:
        mm = _section_map(cp, "map")
        if mm is not None:
            cfg.map = mm
        ref = _section_map(cp, "reference_map")
        if ref is not None:
            cfg.reference_map = ref

        img = cp["images"] if cp.has_section("images") else {}
        if "app" in img:
            cfg.binary = (base_dir / img["app"]).read_bytes()
        if "framed" in img:
            frames = loads_image((base_dir / img["framed"]).read_bytes())
            cfg.binary = b"".join(f.payload for f in frames)
        cfg.app_size = parse_int(img.get("app_size", str(cfg.app_size)))
        cfg.app_seed = parse_int(img.get("app_seed", str(cfg.app_seed)))
        cfg.key_offset = parse_int(img.get("key_offset", str(cfg.key_offset)))
        cfg.golden_offset = parse_int(img.get("golden_offset", str(cfg.golden_offset)))
        if "chip_info" in img:
            cfg.chip_info = bytes.fromhex(img["chip_info"])

        proto = cp["protocol"] if cp.has_section("protocol") else {}
        if "key" in proto:
            cfg.key = bytes.fromhex(proto["key"])
        cfg.seed = parse_int(proto.get("seed", str(cfg.seed)))
        cfg.flag = parse_int(proto.get("flag", str(cfg.flag)))
        if cfg.flag not in (0, 1):
            raise ConfigError(f"flag must be 0 or 1, got {cfg.flag}")
        if "region" in proto:
            cfg.region = RegionSpec(*_pair(proto["region"]))
        cfg.baud = parse_int(proto.get("baud", str(cfg.baud)))

        attack = cp["attack"] if cp.has_section("attack") else {}
        script_text = ""
        if "script" in attack:
            script_text += (base_dir / attack["script"]).read_text() + "\n"
        script_text += attack.get("actions", "")
        cfg.script = parse_script(script_text, parse_int(attack.get("seed", "0")))
    except (OSError, ValueError, KeyError, DeviceError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def resolve_config_path(path: str | os.PathLike) -> Path:
    """Use ``path`` as given, else look it up in ``$SRACARE_CONFIG_DIR``."""
    p = Path(path)
    if p.exists():
        return p
    base = os.environ.get(CONFIG_DIR_ENV)
    if base:
        for candidate in (Path(base) / p, Path(base) / f"{p}.ini"):
            if candidate.exists():
                return candidate
    raise ConfigError(f"scenario config {str(path)!r} not found")


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    p = resolve_config_path(path)
    return parse_config(p.read_text(), p.parent, p.stem)


# -- execution ------------------------------------------------------------------

def build_device_images(cfg: ScenarioConfig):
    frames = build_image(cfg.key, cfg.app_binary())
    layout = BootLayout(image_frames=len(frames), key_offset=cfg.key_offset,
                        key_length=len(cfg.key), golden_offset=cfg.golden_offset)
    rom = assemble_rom(cfg.map, layout, cfg.chip_info, cfg.key, frames)
    flash = assemble_flash(cfg.map, layout, frames)
    return frames, layout, rom, flash


def probe_recovered(dev, records) -> None:
    """Unprivileged one-octet write into each recovered payload and header."""
    for rec in records:
        write_mem(dev, dev.map.flash.start + rec.flash_region.start, b"\x00")
        write_mem(dev, dev.map.flash.start + dev.layout.header_offset + rec.frame_number * HEADER_SIZE, b"\x00")


def run_scenario(cfg: ScenarioConfig) -> ScenarioRun:
    frames, layout, rom, flash = build_device_images(cfg)
    trace = Trace()
    dev = init_device(cfg.map, rom, flash, layout, trace)
    before = dev.snapshot()

    apply_script_to_device(dev, cfg.script)
    fire_pending(dev, "startup")
    # power-on FSBL: peripherals up, chip info read, key locked
    init_peripherals(dev, cfg.baud)
    read_chip_info(dev)
    protect_key_region(dev)

    verifier = new_verifier(cfg.key, cfg.seed, trace)
    prover = new_prover(dev)
    channel = AdversarialChannel(cfg.script, trace)
    hs = run_handshake(verifier, prover, channel)

    boot = None
    report_match = None
    if hs.authenticated:
        cmd = send_command(verifier, prover, channel, cfg.flag, cfg.region)
        if cmd is not None:
            if cmd.f == 1:
                boot = secure_boot(dev, prover.key, baud=cfg.baud)
                probe_recovered(dev, boot.records)
                prover_finish(prover)
                verifier_finish(verifier)
            else:
                report = attest_region(dev, prover.key, cmd.d)
                prover_finish(prover)
                got = send_report(verifier, prover, channel, report)
                report_match = got is not None and verify_report(flash, cfg.key, cfg.region, got)
                if got is not None:
                    verifier_finish(verifier)
    fire_pending(dev, "post")
    after = dev.snapshot()
    trace.finalize()

    sr = ScenarioResult(config=cfg, trace=trace, device_before=before, device_after=after,
                        verifier=verifier, prover=prover, handshake=hs, boot=boot,
                        report_match=report_match)
    return ScenarioRun(sr, check_properties(sr), flash)


def write_outputs(run: ScenarioRun, out_dir: str | os.PathLike, stem: str) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trace": out / f"{stem}.trace",
        "report": out / f"{stem}.report",
        "verdicts": out / f"{stem}.verdicts",
    }
    paths["trace"].write_text(run.result.trace.dumps())
    paths["report"].write_text(format_report(run.verdicts, f"scenario {stem}"))
    paths["verdicts"].write_text(format_sidecar(run.verdicts))
    return paths


__all__ = ["ConfigError", "ScenarioConfig", "ScenarioRun", "parse_config", "load_config",
           "resolve_config_path", "run_scenario", "write_outputs", "build_device_images",
           "dumps_image", "CONFIG_DIR_ENV"]
