"""Boot chain: FSBL from ROM, then frame-by-frame verification of flash.

A frame that fails verification is handed to the resilience engine and
re-verified from device memory; a failed re-verification halts the boot.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .device import (DeviceState, OutOfRange, fire_pending, init_peripherals,
                     protect_key_region, read_chip_info, read_mem)
from .frames import FRAME_PAYLOAD, HEADER_SIZE, Frame, FrameHeader, verify_frame
from .resilience import RecoveryError, RecoveryRecord, header_slot, recover
from .trace import EventKind

DEFAULT_BAUD = 115200


class BootStatus(str, enum.Enum):
    CLEAN = "CleanBoot"
    RECOVERED = "RecoveredBoot"
    HALTED = "Halted"


@dataclass
class BootOutcome:
    status: BootStatus
    frames_checked: int
    frames_recovered: list = field(default_factory=list)
    records: list = field(default_factory=list)
    reason: str = ""


def read_frame(dev: DeviceState, frame_number: int) -> Frame:
    """Fetch one frame as the bootstrap sees it (payload from ``boot_start``)."""
    hdr = header_slot(dev, frame_number)
    raw_hdr = read_mem(dev, hdr.start, HEADER_SIZE, privileged=True)
    payload = read_mem(dev, dev.layout.boot_start + frame_number * FRAME_PAYLOAD,
                       FRAME_PAYLOAD, privileged=True)
    return Frame(FrameHeader.from_bytes(raw_hdr), payload)


def fsbl(dev: DeviceState, baud: int = DEFAULT_BAUD) -> bytes:
    """First-stage loader: bring up peripherals, read chip info, lock the key."""
    init_peripherals(dev, baud)
    info = read_chip_info(dev)
    protect_key_region(dev)
    return info


def secure_boot(dev: DeviceState, key: bytes, golden_rom_offset: int | None = None,
                baud: int = DEFAULT_BAUD) -> BootOutcome:
    trace = dev.trace
    n = dev.layout.image_frames
    trace.boot_active = True
    trace.emit(EventKind.BOOT_START, measure_start=dev.layout.boot_start, frames=n)
    fire_pending(dev, "boot")
    fsbl(dev, baud)

    recovered: list[int] = []
    records: list[RecoveryRecord] = []
    checked = 0
    for k in range(n):
        try:
            frame = read_frame(dev, k)
        except OutOfRange as exc:
            return _halt(dev, checked, recovered, records, f"frame {k}: {exc}")
        checked += 1
        if verify_frame(key, frame, trace, expected_number=k):
            continue
        try:
            records.append(recover(dev, key, k, golden_rom_offset))
        except RecoveryError as exc:
            return _halt(dev, checked, recovered, records, str(exc))
        recovered.append(k)
        if not verify_frame(key, read_frame(dev, k), trace, expected_number=k):
            return _halt(dev, checked, recovered, records, f"frame {k} fails after reflash")

    status = BootStatus.RECOVERED if recovered else BootStatus.CLEAN
    trace.emit(EventKind.BOOT_END, status=status.value, frames_checked=checked,
               recovered=len(recovered))
    trace.boot_active = False
    return BootOutcome(status, checked, recovered, records)


def _halt(dev, checked, recovered, records, reason) -> BootOutcome:
    # no BOOT_END on a halted boot
    dev.trace.boot_active = False
    return BootOutcome(BootStatus.HALTED, checked, recovered, records, reason)
