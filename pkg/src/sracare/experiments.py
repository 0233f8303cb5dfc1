"""Campaign drivers shared by ``scripts/`` and the acceptance tests.

Each driver yields one record per trial and leaves the judging to the
caller, so tests can apply their own oracle to the raw outcome.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .adversary import AdversarialChannel, AttackScript, ReplayMsg, TamperMsg
from .device import (DEFAULT_MAP, BootLayout, DeviceState, MemoryMap, Verdict, init_device,
                     write_mem)
from .frames import FRAME_PAYLOAD, HEADER_SIZE, assemble_flash, assemble_rom, build_image
from .protocol import new_prover, new_verifier, run_handshake
from .secureboot import BootOutcome, secure_boot

KEY = bytes(range(32))
CHIP_INFO = b"SRACARE-SOC-0001"
# wire sizes of Challenge, ProverAuth, VerifierAuth, AuthResult
HANDSHAKE_WIRE_SIZES = {1: 37, 2: 69, 3: 37, 4: 6}


@dataclass
class Testbed:
    """A pristine device image that trials copy instead of rebuilding."""

    map: MemoryMap
    layout: BootLayout
    rom: bytes
    flash: bytes
    key: bytes

    def device(self) -> DeviceState:
        return init_device(self.map, self.rom, self.flash, self.layout)

    def stored_bits(self) -> int:
        return self.layout.image_frames * (FRAME_PAYLOAD + HEADER_SIZE) * 8

    def bit_location(self, i: int) -> tuple[int, int, int]:
        """Map stored-bit index -> (flash offset, bit in octet, frame number).

        Bits are enumerated frame by frame in wire order: header first, then
        payload, matching the 1064-octet framed layout.
        """
        frame, rem = divmod(i, (FRAME_PAYLOAD + HEADER_SIZE) * 8)
        octet, bit = divmod(rem, 8)
        if octet < HEADER_SIZE:
            off = self.layout.header_offset + frame * HEADER_SIZE + octet
        else:
            off = frame * FRAME_PAYLOAD + (octet - HEADER_SIZE)
        return off, bit, frame


def make_testbed(app_size: int, key: bytes = KEY, seed: int = 1, mm: MemoryMap = DEFAULT_MAP) -> Testbed:
    binary = random.Random(seed).randbytes(app_size)
    frames = build_image(key, binary)
    layout = BootLayout(image_frames=len(frames)).resolved(mm)
    rom = assemble_rom(mm, layout, CHIP_INFO, key, frames)
    flash = assemble_flash(mm, layout, frames)
    return Testbed(mm, layout, rom, flash, key)


@dataclass
class BootTrial:
    label: object
    tampered_frames: set
    outcome: BootOutcome
    flash_after: bytes
    probes: list  # (region name, verdict, memory unchanged)


def _probe(dev: DeviceState, frames) -> list:
    out = []
    for k in frames:
        for name, addr in (("payload", dev.map.flash.start + k * FRAME_PAYLOAD + 17),
                           ("header", dev.map.flash.start + dev.layout.header_offset + k * HEADER_SIZE + 3)):
            off = addr - dev.map.flash.start
            before = dev.flash[off]
            verdict = write_mem(dev, addr, bytes([before ^ 0xA5]))
            out.append((f"{name}{k}", verdict, dev.flash[off] == before))
    return out


def boot_trial(bed: Testbed, corruptions, label=None, probe: bool = True) -> BootTrial:
    """Apply ``(offset, xor_mask)`` corruptions to flash, then secure-boot."""
    dev = bed.device()
    tampered = set()
    for off, mask in corruptions:
        dev.flash[off] ^= mask
        if mask:
            if off < bed.layout.image_frames * FRAME_PAYLOAD:
                tampered.add(off // FRAME_PAYLOAD)
            else:
                tampered.add((off - bed.layout.header_offset) // HEADER_SIZE)
    outcome = secure_boot(dev, bed.key)
    flash_after = bytes(dev.flash)
    probes = _probe(dev, outcome.frames_recovered) if probe else []
    return BootTrial(label, tampered, outcome, flash_after, probes)


def bitflip_sweep(bed: Testbed):
    """Flip every stored bit of the image, one boot per bit."""
    for i in range(bed.stored_bits()):
        off, bit, _ = bed.bit_location(i)
        yield boot_trial(bed, [(off, 0x80 >> bit)], label=i, probe=False)


def recovery_trials(bed: Testbed, n: int, seed: int = 0):
    """Random single-frame corruptions: 1-8 octets inside one frame's payload or header."""
    rng = random.Random(seed)
    for t in range(n):
        k = rng.randrange(bed.layout.image_frames)
        corruptions = []
        for _ in range(rng.randint(1, 8)):
            if rng.random() < 0.8:
                off = k * FRAME_PAYLOAD + rng.randrange(FRAME_PAYLOAD)
            else:
                off = bed.layout.header_offset + k * HEADER_SIZE + rng.randrange(HEADER_SIZE)
            corruptions.append((off, rng.randrange(1, 256)))
        yield boot_trial(bed, corruptions, label=(t, k))


def handshake(seed: int, script: AttackScript | None = None, bed: Testbed | None = None,
              key: bytes = KEY) -> bool:
    bed = bed or make_testbed(64, key)
    dev = bed.device()
    channel = AdversarialChannel(script or AttackScript(), dev.trace)
    vr = new_verifier(key, seed, dev.trace)
    return run_handshake(vr, new_prover(dev), channel).authenticated


def tamper_plan(n_seeds: int, exhaustive_seed: int = 0, sample_seed: int = 99):
    """(seed, msg, bit): every bit of every message for one seed, one sampled tamper for the rest."""
    rng = random.Random(sample_seed)
    for seed in range(n_seeds):
        if seed == exhaustive_seed:
            for msg, size in HANDSHAKE_WIRE_SIZES.items():
                for bit in range(size * 8):
                    yield seed, msg, bit
        else:
            msg = rng.choice(list(HANDSHAKE_WIRE_SIZES))
            yield seed, msg, rng.randrange(HANDSHAKE_WIRE_SIZES[msg] * 8)


def tamper_script(msg: int, bit: int) -> AttackScript:
    return AttackScript((TamperMsg(msg, bit),))


def replay_pair(seed: int, slots, bed: Testbed | None = None) -> tuple[bool, bool]:
    """Run session i honestly, then session i+1 with session i's messages replayed at ``slots``.

    Returns (session i authenticated, session i+1 authenticated).
    """
    bed = bed or make_testbed(64)
    dev = bed.device()
    script = AttackScript(tuple(ReplayMsg(s, session=1) for s in slots))
    channel = AdversarialChannel(script, dev.trace)
    first = run_handshake(new_verifier(bed.key, seed, dev.trace), new_prover(dev), channel)
    second = run_handshake(new_verifier(bed.key, seed + 10_000, dev.trace), new_prover(dev), channel)
    return first.authenticated, second.authenticated


def denied(verdict) -> bool:
    return verdict is Verdict.DENIED
