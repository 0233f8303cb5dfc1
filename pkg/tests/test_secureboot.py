import pytest
from dataclasses import replace

from sracare.device import DEFAULT_MAP, RegionSpec, write_mem
from sracare.frames import FRAME_PAYLOAD, FRAME_SIZE
from sracare.resilience import (AddrInvalid, FrameOutOfRange, GoldenCorrupt, header_slot, locate,
                                recover)
from sracare.secureboot import BootStatus, secure_boot
from sracare.trace import EventKind

from conftest import KEY, make_device


def kinds(dev):
    return [e.kind for e in dev.trace]


def test_clean_boot(device):
    dev, _, flash = device
    out = secure_boot(dev, KEY)
    assert out.status is BootStatus.CLEAN
    assert out.frames_checked == 6
    assert bytes(dev.flash) == flash
    assert kinds(dev).count(EventKind.FRAME_VERIFY) == 6
    assert kinds(dev)[-1] is EventKind.BOOT_END


def test_boot_events_carry_boot_active(device):
    dev, _, _ = device
    secure_boot(dev, KEY)
    start = next(i for i, e in enumerate(dev.trace) if e.kind is EventKind.BOOT_START)
    assert all(e.get("boot_active") == 1 for e in dev.trace[start:])
    assert not dev.trace.boot_active


def test_fsbl_initializes_before_first_verify(device):
    dev, _, _ = device
    secure_boot(dev, KEY)
    ks = kinds(dev)
    assert ks.index(EventKind.INIT_FLASH_CTRL) < ks.index(EventKind.FRAME_VERIFY)


@pytest.mark.parametrize("offset", [0, 1023, 1024, 5733, 5734 + 100])
def test_payload_corruption_recovered(offset):
    dev, _, flash = make_device()
    dev.flash[offset] ^= 0x01
    out = secure_boot(dev, KEY)
    assert out.status is BootStatus.RECOVERED
    assert out.frames_recovered == [offset // FRAME_PAYLOAD]
    assert bytes(dev.flash) == flash


def test_header_corruption_recovered():
    dev, _, flash = make_device()
    dev.flash[dev.layout.header_offset + 2 * 40 + 33] ^= 0x10
    out = secure_boot(dev, KEY)
    assert out.frames_recovered == [2]
    assert bytes(dev.flash) == flash


def test_recovery_event_order():
    dev, _, _ = make_device()
    dev.flash[10] ^= 0xFF
    secure_boot(dev, KEY)
    re = [e.kind for e in dev.trace if e.kind.value.startswith("RE_")]
    assert re == [EventKind.RE_TRIGGER, EventKind.RE_REFLASH, EventKind.RE_LOCK]


def test_recovered_region_locked():
    dev, _, _ = make_device()
    dev.flash[1500] ^= 0x04
    secure_boot(dev, KEY)
    start = dev.map.flash.start + 1024
    assert write_mem(dev, start + 5, b"\x00").value == "denied"
    assert write_mem(dev, header_slot(dev, 1).start, b"\x00").value == "denied"
    assert write_mem(dev, dev.map.flash.start, b"\x00").value == "allowed"


def test_corrupt_golden_halts():
    dev, _, _ = make_device()
    dev.flash[0] ^= 1
    rom = bytearray(dev.rom)
    rom[dev.layout.golden_offset + 100] ^= 1
    dev.rom = bytes(rom)
    out = secure_boot(dev, KEY)
    assert out.status is BootStatus.HALTED
    assert EventKind.BOOT_END not in kinds(dev)


def test_wrong_golden_offset_halts():
    dev, _, _ = make_device()
    dev.flash[0] ^= 1
    out = secure_boot(dev, KEY, golden_rom_offset=0x0)
    assert out.status is BootStatus.HALTED


def test_locate_bounds():
    assert locate(5, 6) == RegionSpec(5 * 1024, 1024)
    with pytest.raises(FrameOutOfRange):
        locate(6, 6)


def test_recover_returns_record():
    dev, _, _ = make_device()
    rec = recover(dev, KEY, 3)
    assert rec.flash_region == RegionSpec(3072, 1024)
    assert rec.rom_source == RegionSpec(dev.layout.golden_offset + 3 * FRAME_SIZE, FRAME_SIZE)
    assert rec.relocked


def test_recover_golden_corrupt():
    dev, _, _ = make_device()
    with pytest.raises(GoldenCorrupt):
        recover(dev, KEY, 0, golden_rom_offset=dev.layout.golden_offset + FRAME_SIZE)


def test_recover_golden_outside_rom():
    dev, _, _ = make_device()
    with pytest.raises(AddrInvalid):
        recover(dev, KEY, 0, golden_rom_offset=dev.map.rom.length)


def test_boot_with_small_flash_map():
    mm = replace(DEFAULT_MAP, flash=RegionSpec(0x30000000, 0x1000))
    dev, _, flash = make_device(app_size=2000, mm=mm)
    dev.flash[1024] ^= 1
    out = secure_boot(dev, KEY)
    assert out.status is BootStatus.RECOVERED and bytes(dev.flash) == flash
