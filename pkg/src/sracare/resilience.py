"""Resilience engine: reflash a corrupted frame from the ROM golden image.

The golden copy is stored framed, so the engine authenticates its own source
before writing. After the privileged write, the payload window and the
frame's header slot are both covered by locked, non-writable PMP entries.
"""

from __future__ import annotations

from dataclasses import dataclass

from .device import (DeviceState, PmpEntry, RegionSpec, add_pmp_entry, read_mem,
                     write_mem)
from .frames import FRAME_PAYLOAD, FRAME_SIZE, HEADER_SIZE, Frame, verify_frame
from .trace import EventKind


class RecoveryError(Exception):
    pass


class FrameOutOfRange(RecoveryError):
    pass


class GoldenCorrupt(RecoveryError):
    pass


class AddrInvalid(RecoveryError):
    pass


@dataclass(frozen=True)
class RecoveryRecord:
    frame_number: int
    flash_region: RegionSpec  # flash-relative
    rom_source: RegionSpec  # rom-relative
    relocked: bool


def locate(frame_number: int, image_frames: int) -> RegionSpec:
    if not 0 <= frame_number < image_frames:
        raise FrameOutOfRange(f"frame {frame_number} outside image of {image_frames} frames")
    return RegionSpec(frame_number * FRAME_PAYLOAD, FRAME_PAYLOAD)


def header_slot(dev: DeviceState, frame_number: int) -> RegionSpec:
    """Absolute address range of a frame's header in the flash header table."""
    return RegionSpec(dev.map.flash.start + dev.layout.header_offset + frame_number * HEADER_SIZE,
                      HEADER_SIZE)


def recover(dev: DeviceState, key: bytes, frame_number: int,
            golden_rom_offset: int | None = None) -> RecoveryRecord:
    if golden_rom_offset is None:
        golden_rom_offset = dev.layout.golden_offset
    region = locate(frame_number, dev.layout.image_frames)
    flash_abs = RegionSpec(dev.map.flash.start + region.start, region.length)
    hdr = header_slot(dev, frame_number)
    if not dev.map.flash.contains(flash_abs) or not dev.map.flash.contains(hdr) \
            or region.end > dev.layout.header_offset:
        raise AddrInvalid(f"frame {frame_number} maps outside the flash payload area")
    source = RegionSpec(golden_rom_offset + frame_number * FRAME_SIZE, FRAME_SIZE)
    if source.end > dev.map.rom.length:
        raise AddrInvalid(f"golden frame {frame_number} lies outside rom")

    dev.trace.emit(EventKind.RE_TRIGGER, frame_number=frame_number)
    raw = read_mem(dev, dev.map.rom.start + source.start, FRAME_SIZE, privileged=True)
    golden = Frame.from_bytes(raw)
    if not verify_frame(key, golden, expected_number=frame_number):
        raise GoldenCorrupt(f"golden frame {frame_number} fails verification")

    write_mem(dev, flash_abs.start, golden.payload, privileged=True)
    write_mem(dev, hdr.start, golden.header.to_bytes(), privileged=True)
    dev.trace.emit(EventKind.RE_REFLASH, frame_number=frame_number, start=flash_abs.start,
                   length=flash_abs.length, header=hdr.start, rom_source=source.start)
    # lock strictly after the write; locking first would block the reflash
    add_pmp_entry(dev, PmpEntry(flash_abs, readable=True, writable=False, executable=True, locked=True))
    add_pmp_entry(dev, PmpEntry(hdr, readable=True, writable=False, executable=False, locked=True))
    dev.trace.emit(EventKind.RE_LOCK, frame_number=frame_number, start=flash_abs.start,
                   length=flash_abs.length, header=hdr.start)
    return RecoveryRecord(frame_number, region, source, relocked=True)
