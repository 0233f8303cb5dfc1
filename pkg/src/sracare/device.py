"""Simulated prover hardware.

A flat 32-bit octet-addressed space with disjoint ROM, RAM, flash and MMIO
windows, a 16-octet chip-info window inside ROM, peripheral registers, and a
PMP list. Every memory access goes through :func:`check_access` (or the
privileged path) and lands in the device trace as a ``MEM_ACCESS`` event.

PMP semantics: entries are consulted in list order, the first entry
overlapping the accessed region decides, and an access no entry overlaps is
allowed. The list is append-only; locked entries are frozen dataclasses, so
"locked implies immutable" holds by construction.
"""

from __future__ import annotations

import copy
import enum
import re
from dataclasses import dataclass, field, replace

from .trace import EventKind, Trace

ADDRESS_SPACE = 1 << 32
CHIP_INFO_LEN = 16


class DeviceError(Exception):
    pass


class MapInvalid(DeviceError):
    pass


class SizeMismatch(DeviceError):
    pass


class OutOfRange(DeviceError):
    pass


class BadBaud(DeviceError):
    pass


class AccessMode(str, enum.Enum):
    READ = "read"
    WRITE = "write"
    EXECUTE = "execute"


class Verdict(str, enum.Enum):
    ALLOWED = "allowed"
    DENIED = "denied"


@dataclass(frozen=True)
class RegionSpec:
    start: int
    length: int

    @property
    def end(self) -> int:
        return self.start + self.length

    def contains(self, other: "RegionSpec") -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: "RegionSpec") -> bool:
        return self.start < other.end and other.start < self.end

    def in_address_space(self) -> bool:
        return 0 <= self.start and self.length >= 0 and self.end <= ADDRESS_SPACE

    def __str__(self) -> str:
        return f"0x{self.start:08x}+0x{self.length:x}"


@dataclass(frozen=True)
class MemoryMap:
    rom: RegionSpec
    ram: RegionSpec
    flash: RegionSpec
    chip_info: RegionSpec
    mmio: tuple = ()  # ((name, RegionSpec), ...)

    def regions(self) -> list[tuple[str, RegionSpec]]:
        named = [("rom", self.rom), ("ram", self.ram), ("flash", self.flash)]
        named.extend((f"mmio.{name}", r) for name, r in self.mmio)
        return named

    def validate(self) -> None:
        named = self.regions()
        for name, r in named + [("chip_info", self.chip_info)]:
            if r.length <= 0:
                raise MapInvalid(f"{name} has zero length")
            if not r.in_address_space():
                raise MapInvalid(f"{name} exceeds the 32-bit address space")
        for i, (na, ra) in enumerate(named):
            for nb, rb in named[i + 1:]:
                if ra.overlaps(rb):
                    raise MapInvalid(f"{na} overlaps {nb}")
        if not self.rom.contains(self.chip_info):
            raise MapInvalid("chip_info lies outside rom")
        if self.chip_info.length < CHIP_INFO_LEN:
            raise MapInvalid("chip_info shorter than 16 octets")


DEFAULT_MAP = MemoryMap(
    rom=RegionSpec(0x0001_0000, 0x4000),
    ram=RegionSpec(0x2000_0000, 0x8000),
    flash=RegionSpec(0x3000_0000, 0x2400),
    chip_info=RegionSpec(0x0001_0000, 0x20),
    mmio=(
        ("uart", RegionSpec(0x4000_0000, 0x100)),
        ("spi", RegionSpec(0x4000_1000, 0x100)),
        ("flash_ctrl", RegionSpec(0x4000_2000, 0x100)),
    ),
)

_MAP_LINE = re.compile(r"^\s*([\w.]+)\s*[=:]\s*(\S+?)\s*[, ]\s*(\S+)\s*$")


def parse_int(text: str) -> int:
    return int(text.strip(), 0)


def parse_map(text: str) -> MemoryMap:
    """Parse ``name = start, length`` lines (decimal or 0x-hex)."""
    fields: dict[str, RegionSpec] = {}
    mmio = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        m = _MAP_LINE.match(line)
        if not m:
            raise MapInvalid(f"cannot parse map line {raw!r}")
        name = m.group(1)
        try:
            region = RegionSpec(parse_int(m.group(2)), parse_int(m.group(3)))
        except ValueError as exc:
            raise MapInvalid(f"bad number in {raw!r}") from exc
        if name.startswith("mmio."):
            mmio.append((name[5:], region))
        else:
            fields[name] = region
    missing = {"rom", "ram", "flash", "chip_info"} - fields.keys()
    if missing:
        raise MapInvalid(f"map lacks {sorted(missing)}")
    return MemoryMap(fields["rom"], fields["ram"], fields["flash"],
                     fields["chip_info"], tuple(mmio))


def format_map(mm: MemoryMap) -> str:
    lines = [f"{name} = 0x{r.start:08x}, 0x{r.length:x}" for name, r in mm.regions()]
    lines.insert(3, f"chip_info = 0x{mm.chip_info.start:08x}, 0x{mm.chip_info.length:x}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PmpEntry:
    region: RegionSpec
    readable: bool = True
    writable: bool = True
    executable: bool = True
    locked: bool = False

    def permits(self, mode: AccessMode) -> bool:
        return {AccessMode.READ: self.readable,
                AccessMode.WRITE: self.writable,
                AccessMode.EXECUTE: self.executable}[AccessMode(mode)]


@dataclass
class PeripheralRegisters:
    uart_baud: int = 0
    uart_initialized: bool = False
    spi_initialized: bool = False
    flash_ctrl_initialized: bool = False


@dataclass(frozen=True)
class BootLayout:
    """Where the boot chain finds its inputs.

    ``key_offset`` and ``golden_offset`` are ROM-relative; ``header_offset``
    is flash-relative (frame headers live in a table after the payloads);
    ``boot_start`` is the absolute address the bootstrap measures payloads
    from, normally ``map.flash.start``.
    """

    image_frames: int
    key_offset: int = 0x40
    key_length: int = 32
    golden_offset: int = 0x400
    header_offset: int | None = None
    boot_start: int | None = None

    def resolved(self, mm: MemoryMap) -> "BootLayout":
        return replace(
            self,
            header_offset=mm.flash.length - 1024 if self.header_offset is None else self.header_offset,
            boot_start=mm.flash.start if self.boot_start is None else self.boot_start,
        )

    def key_region(self, mm: MemoryMap) -> RegionSpec:
        return RegionSpec(mm.rom.start + self.key_offset, self.key_length)


@dataclass
class DeviceState:
    map: MemoryMap
    rom: bytes
    flash: bytearray
    ram: bytearray
    layout: BootLayout
    registers: PeripheralRegisters = field(default_factory=PeripheralRegisters)
    pmp: list = field(default_factory=list)
    trace: Trace = field(default_factory=Trace)
    pending: list = field(default_factory=list)  # (phase, EventKind, attrs)

    def snapshot(self) -> "DeviceSnapshot":
        return DeviceSnapshot(
            map=self.map,
            rom=bytes(self.rom),
            flash=bytes(self.flash),
            ram=bytes(self.ram),
            layout=self.layout,
            registers=copy.copy(self.registers),
            pmp=tuple(self.pmp),
        )

    def rom_bytes(self, offset: int, length: int) -> bytes:
        return self.rom[offset:offset + length]


@dataclass(frozen=True)
class DeviceSnapshot:
    map: MemoryMap
    rom: bytes
    flash: bytes
    ram: bytes
    layout: BootLayout
    registers: PeripheralRegisters
    pmp: tuple


def init_device(mm: MemoryMap, rom_image: bytes, flash_image: bytes,
                layout: BootLayout | None = None, trace: Trace | None = None) -> DeviceState:
    mm.validate()
    if len(rom_image) != mm.rom.length:
        raise SizeMismatch(f"rom image is {len(rom_image)} octets, map says {mm.rom.length}")
    if len(flash_image) != mm.flash.length:
        raise SizeMismatch(f"flash image is {len(flash_image)} octets, map says {mm.flash.length}")
    if layout is None:
        layout = BootLayout(image_frames=count_golden_frames(rom_image, BootLayout(0).golden_offset))
    layout = layout.resolved(mm)
    if not mm.rom.contains(layout.key_region(mm)):
        raise MapInvalid("key region lies outside rom")
    dev = DeviceState(
        map=mm,
        rom=bytes(rom_image),
        flash=bytearray(flash_image),
        ram=bytearray(mm.ram.length),
        layout=layout,
        trace=trace if trace is not None else Trace(),
    )
    dev.trace.emit(EventKind.STARTUP, rom=str(mm.rom), flash=str(mm.flash))
    return dev


def count_golden_frames(rom_image: bytes, golden_offset: int) -> int:
    """Count consecutive well-numbered framed records starting at ``golden_offset``."""
    n = 0
    while True:
        base = golden_offset + n * 1064
        if base + 1064 > len(rom_image):
            return n
        number = int.from_bytes(rom_image[base + 32:base + 36], "big")
        offset = int.from_bytes(rom_image[base + 36:base + 40], "big")
        if number != n or offset != n * 1024:
            return n
        n += 1


def _pmp_verdict(pmp, region: RegionSpec, mode: AccessMode) -> Verdict:
    for entry in pmp:
        if entry.region.overlaps(region):
            return Verdict.ALLOWED if entry.permits(mode) else Verdict.DENIED
    return Verdict.ALLOWED


def check_access(dev: DeviceState, region: RegionSpec, mode: AccessMode) -> Verdict:
    if not region.in_address_space():
        raise OutOfRange(f"{region} outside the address space")
    mode = AccessMode(mode)
    verdict = _pmp_verdict(dev.pmp, region, mode)
    dev.trace.emit(EventKind.MEM_ACCESS, start=region.start, length=region.length,
                   mode=mode.value, verdict=verdict.value, privileged=0, pmp=len(dev.pmp))
    return verdict


def _backing(dev: DeviceState, region: RegionSpec, writable_only: bool):
    windows = [(dev.map.flash, dev.flash), (dev.map.ram, dev.ram)]
    if not writable_only:
        windows.append((dev.map.rom, dev.rom))
    for window, store in windows:
        if window.contains(region):
            return window, store
    return None, None


def _emit_privileged(dev: DeviceState, region: RegionSpec, mode: AccessMode) -> None:
    dev.trace.emit(EventKind.MEM_ACCESS, start=region.start, length=region.length,
                   mode=mode.value, verdict=Verdict.ALLOWED.value, privileged=1, pmp=len(dev.pmp))


def write_mem(dev: DeviceState, addr: int, data: bytes, privileged: bool = False) -> Verdict:
    """Store ``data`` at ``addr`` (flash or RAM only).

    ``privileged`` models code running from secure ROM (FSBL, recovery
    engine) and bypasses PMP. Exactly one MEM_ACCESS event is emitted.
    """
    region = RegionSpec(addr, len(data))
    window, store = _backing(dev, region, writable_only=True)
    if window is None:
        raise OutOfRange(f"{region} is not inside flash or ram")
    if privileged:
        _emit_privileged(dev, region, AccessMode.WRITE)
    elif check_access(dev, region, AccessMode.WRITE) is Verdict.DENIED:
        return Verdict.DENIED
    off = addr - window.start
    store[off:off + len(data)] = data
    return Verdict.ALLOWED


def read_mem(dev: DeviceState, addr: int, length: int, privileged: bool = False) -> bytes | None:
    """Load ``length`` octets; returns None when PMP denies the read."""
    region = RegionSpec(addr, length)
    window, store = _backing(dev, region, writable_only=False)
    if window is None:
        raise OutOfRange(f"{region} is not inside rom, flash or ram")
    if privileged:
        _emit_privileged(dev, region, AccessMode.READ)
    elif check_access(dev, region, AccessMode.READ) is Verdict.DENIED:
        return None
    off = addr - window.start
    return bytes(store[off:off + length])


def add_pmp_entry(dev: DeviceState, entry: PmpEntry) -> None:
    dev.pmp.append(entry)


def init_peripherals(dev: DeviceState, baud: int) -> None:
    if baud <= 0:
        raise BadBaud(f"baud must be positive, got {baud}")
    regs = dev.registers
    regs.uart_baud = baud
    regs.uart_initialized = True
    dev.trace.emit(EventKind.INIT_UART, baud=baud)
    regs.spi_initialized = True
    dev.trace.emit(EventKind.INIT_SPI)
    regs.flash_ctrl_initialized = True
    dev.trace.emit(EventKind.INIT_FLASH_CTRL)


def read_chip_info(dev: DeviceState) -> bytes:
    off = dev.map.chip_info.start - dev.map.rom.start
    info = dev.rom[off:off + CHIP_INFO_LEN]
    dev.trace.emit(EventKind.READ_CHIP_INFO, start=dev.map.chip_info.start)
    return info


def read_key(dev: DeviceState) -> bytes:
    """Privileged (ROM-context) fetch of the shared key K."""
    region = dev.layout.key_region(dev.map)
    return read_mem(dev, region.start, region.length, privileged=True)


def protect_key_region(dev: DeviceState) -> None:
    """Install a locked no-access PMP entry over the key, once."""
    region = dev.layout.key_region(dev.map)
    for entry in dev.pmp:
        if entry.region == region and entry.locked and not entry.readable:
            return
    add_pmp_entry(dev, PmpEntry(region, readable=False, writable=False,
                                executable=False, locked=True))


def schedule_event(dev: DeviceState, phase: str, kind: EventKind, **attrs) -> None:
    dev.pending.append((phase, kind, attrs))


def fire_pending(dev: DeviceState, phase: str) -> None:
    """Emit (or run) every injection queued for ``phase``, in queue order."""
    keep = []
    for item in dev.pending:
        when, kind, attrs = item
        if when != phase:
            keep.append(item)
        elif callable(kind):
            kind(dev)
        else:
            dev.trace.emit(kind, phase=phase, **attrs)
    dev.pending = keep
