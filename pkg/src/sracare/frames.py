"""Framed flash images.

A frame is a 40-octet header (keyed digest, frame number, flash offset; both
integers big-endian 32-bit) followed by a 1024-octet payload. The digest is
HMAC-SHA256 under the device key over ``be32(number) || be32(offset) ||
payload``, so the header fields are bound to the payload and frames cannot be
swapped between slots.

On the device, payloads sit at ``frame_number * 1024`` from the flash base
and headers in a table at ``layout.header_offset``. A framed image *file* is
the plain concatenation of 1064-octet frames.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from . import crypto
from .device import BootLayout, MemoryMap
from .trace import EventKind, Trace

FRAME_PAYLOAD = 1024
HEADER_SIZE = 40
FRAME_SIZE = HEADER_SIZE + FRAME_PAYLOAD
PAD_OCTET = 0xFF


class FrameError(ValueError):
    pass


class BadPayloadLength(FrameError):
    pass


class EmptyBinary(FrameError):
    pass


@dataclass(frozen=True)
class FrameHeader:
    digest: bytes
    frame_number: int
    flash_offset: int

    def to_bytes(self) -> bytes:
        return self.digest + struct.pack(">II", self.frame_number, self.flash_offset)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "FrameHeader":
        if len(raw) != HEADER_SIZE:
            raise FrameError(f"header must be {HEADER_SIZE} octets, got {len(raw)}")
        number, offset = struct.unpack(">II", raw[32:40])
        return cls(bytes(raw[:32]), number, offset)


@dataclass(frozen=True)
class Frame:
    header: FrameHeader
    payload: bytes

    def __post_init__(self):
        if len(self.payload) != FRAME_PAYLOAD:
            raise BadPayloadLength(f"payload must be {FRAME_PAYLOAD} octets, got {len(self.payload)}")

    def to_bytes(self) -> bytes:
        return self.header.to_bytes() + self.payload

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Frame":
        if len(raw) != FRAME_SIZE:
            raise FrameError(f"frame must be {FRAME_SIZE} octets, got {len(raw)}")
        return cls(FrameHeader.from_bytes(raw[:HEADER_SIZE]), bytes(raw[HEADER_SIZE:]))


def frame_digest(key: bytes, frame_number: int, flash_offset: int, payload: bytes) -> bytes:
    if len(payload) != FRAME_PAYLOAD:
        raise BadPayloadLength(f"payload must be {FRAME_PAYLOAD} octets, got {len(payload)}")
    return crypto.hmac(key, struct.pack(">II", frame_number, flash_offset) + bytes(payload))


def frame_count(image_len: int) -> int:
    return math.ceil(image_len / FRAME_PAYLOAD)


def build_image(key: bytes, binary: bytes) -> list[Frame]:
    """Split ``binary`` into 1 KB frames; the last one is padded with 0xFF."""
    if len(binary) < 1:
        raise EmptyBinary("cannot frame an empty binary")
    frames = []
    for i in range(frame_count(len(binary))):
        chunk = bytes(binary[i * FRAME_PAYLOAD:(i + 1) * FRAME_PAYLOAD])
        payload = chunk.ljust(FRAME_PAYLOAD, bytes([PAD_OCTET]))
        offset = i * FRAME_PAYLOAD
        header = FrameHeader(frame_digest(key, i, offset, payload), i, offset)
        frames.append(Frame(header, payload))
    return frames


def verify_frame(key: bytes, frame: Frame, trace: Trace | None = None,
                 expected_number: int | None = None) -> bool:
    """True iff the header digest matches the frame's own fields.

    With ``expected_number`` the header must also name that slot and its
    offset (``number * 1024``); this is the location check the bootstrap
    and recovery engine apply.
    """
    h = frame.header
    ok = crypto.mac_equal(frame_digest(key, h.frame_number, h.flash_offset, frame.payload), h.digest)
    if expected_number is not None:
        ok = ok and h.frame_number == expected_number and h.flash_offset == expected_number * FRAME_PAYLOAD
    if trace is not None:
        number = h.frame_number if expected_number is None else expected_number
        trace.emit(EventKind.FRAME_VERIFY, frame_number=number, verdict="pass" if ok else "fail")
    return ok


def dumps_image(frames: list[Frame]) -> bytes:
    return b"".join(f.to_bytes() for f in frames)


def loads_image(raw: bytes) -> list[Frame]:
    if not raw or len(raw) % FRAME_SIZE:
        raise FrameError(f"framed image length {len(raw)} is not a positive multiple of {FRAME_SIZE}")
    return [Frame.from_bytes(raw[i:i + FRAME_SIZE]) for i in range(0, len(raw), FRAME_SIZE)]


def max_frames(mm: MemoryMap, layout: BootLayout) -> int:
    layout = layout.resolved(mm)
    return min(layout.header_offset // FRAME_PAYLOAD,
               (mm.flash.length - layout.header_offset) // HEADER_SIZE)


def assemble_flash(mm: MemoryMap, layout: BootLayout, frames: list[Frame]) -> bytes:
    """Lay frames out as the device stores them: payloads then a header table."""
    layout = layout.resolved(mm)
    if len(frames) > max_frames(mm, layout):
        raise FrameError(f"{len(frames)} frames do not fit in flash")
    flash = bytearray([PAD_OCTET]) * mm.flash.length
    for i, f in enumerate(frames):
        flash[i * FRAME_PAYLOAD:(i + 1) * FRAME_PAYLOAD] = f.payload
        h = layout.header_offset + i * HEADER_SIZE
        flash[h:h + HEADER_SIZE] = f.header.to_bytes()
    return bytes(flash)


def assemble_rom(mm: MemoryMap, layout: BootLayout, chip_info: bytes, key: bytes,
                 golden: list[Frame], fsbl: bytes = b"") -> bytes:
    """Build a ROM image holding chip info, key, FSBL blob and golden image."""
    if len(chip_info) > mm.chip_info.length:
        raise FrameError("chip info larger than its window")
    if len(key) != layout.key_length:
        raise FrameError(f"key is {len(key)} octets, layout expects {layout.key_length}")
    rom = bytearray(mm.rom.length)
    ci = mm.chip_info.start - mm.rom.start
    rom[ci:ci + len(chip_info)] = chip_info
    rom[layout.key_offset:layout.key_offset + len(key)] = key
    fsbl_at = layout.key_offset + layout.key_length
    if fsbl_at + len(fsbl) > layout.golden_offset:
        raise FrameError("fsbl overlaps the golden image")
    rom[fsbl_at:fsbl_at + len(fsbl)] = fsbl
    blob = dumps_image(golden)
    if layout.golden_offset + len(blob) > len(rom):
        raise FrameError("golden image does not fit in rom")
    rom[layout.golden_offset:layout.golden_offset + len(blob)] = blob
    # erased tail so golden-frame counting stops cleanly
    tail = layout.golden_offset + len(blob)
    rom[tail:] = bytes([PAD_OCTET]) * (len(rom) - tail)
    return bytes(rom)
