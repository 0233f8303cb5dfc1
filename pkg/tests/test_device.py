from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sracare.device import (DEFAULT_MAP, AccessMode, BadBaud, MapInvalid, OutOfRange, PmpEntry,
                            RegionSpec, SizeMismatch, Verdict, add_pmp_entry, check_access,
                            format_map, init_device, init_peripherals, parse_map,
                            protect_key_region, read_chip_info, read_key, read_mem, write_mem)
from sracare.trace import EventKind

from conftest import CHIP_INFO, KEY, make_device


def test_default_map_valid():
    DEFAULT_MAP.validate()


def test_overlapping_regions_rejected():
    bad = replace(DEFAULT_MAP, ram=RegionSpec(DEFAULT_MAP.flash.start, 0x100))
    with pytest.raises(MapInvalid):
        bad.validate()


def test_chip_info_outside_rom_rejected():
    bad = replace(DEFAULT_MAP, chip_info=RegionSpec(0x50000000, 0x20))
    with pytest.raises(MapInvalid):
        bad.validate()


def test_map_text_round_trip():
    assert parse_map(format_map(DEFAULT_MAP)) == DEFAULT_MAP


def test_parse_map_missing_region():
    with pytest.raises(MapInvalid):
        parse_map("rom = 0x0, 0x100\n")


def test_init_size_mismatch():
    with pytest.raises(SizeMismatch):
        init_device(DEFAULT_MAP, bytes(10), bytes(DEFAULT_MAP.flash.length))


def test_startup_event_first(device):
    dev, _, _ = device
    assert dev.trace[0].kind is EventKind.STARTUP


def test_chip_info_and_key(device):
    dev, _, _ = device
    assert read_chip_info(dev) == CHIP_INFO
    assert read_key(dev) == KEY


def test_pmp_first_match_wins(device):
    dev, _, _ = device
    r = RegionSpec(dev.map.flash.start, 16)
    add_pmp_entry(dev, PmpEntry(r, writable=True))
    add_pmp_entry(dev, PmpEntry(r, writable=False))
    assert check_access(dev, r, AccessMode.WRITE) is Verdict.ALLOWED


def test_pmp_default_allow(device):
    dev, _, _ = device
    assert check_access(dev, RegionSpec(dev.map.ram.start, 4), AccessMode.READ) is Verdict.ALLOWED


def test_denied_write_leaves_memory(device):
    dev, _, _ = device
    r = RegionSpec(dev.map.flash.start, 4)
    add_pmp_entry(dev, PmpEntry(r, writable=False, locked=True))
    before = bytes(dev.flash[:4])
    assert write_mem(dev, r.start, b"\x00" * 4) is Verdict.DENIED
    assert bytes(dev.flash[:4]) == before


def test_privileged_write_bypasses_pmp(device):
    dev, _, _ = device
    r = RegionSpec(dev.map.flash.start, 4)
    add_pmp_entry(dev, PmpEntry(r, writable=False, locked=True))
    assert write_mem(dev, r.start, b"\x01\x02\x03\x04", privileged=True) is Verdict.ALLOWED
    assert bytes(dev.flash[:4]) == b"\x01\x02\x03\x04"


def test_write_outside_writable_memory(device):
    dev, _, _ = device
    with pytest.raises(OutOfRange):
        write_mem(dev, dev.map.rom.start, b"\x00")


def test_key_lock_blocks_unprivileged_read(device):
    dev, _, _ = device
    protect_key_region(dev)
    protect_key_region(dev)
    assert len(dev.pmp) == 1
    kr = dev.layout.key_region(dev.map)
    assert read_mem(dev, kr.start, kr.length) is None
    assert read_key(dev) == KEY


def test_one_event_per_access(device):
    dev, _, _ = device
    n = len(dev.trace)
    write_mem(dev, dev.map.ram.start, b"xy")
    assert len(dev.trace) == n + 1


def test_bad_baud(device):
    dev, _, _ = device
    with pytest.raises(BadBaud):
        init_peripherals(dev, 0)


def test_peripheral_init_order(device):
    dev, _, _ = device
    init_peripherals(dev, 9600)
    kinds = [e.kind for e in dev.trace][-3:]
    assert kinds == [EventKind.INIT_UART, EventKind.INIT_SPI, EventKind.INIT_FLASH_CTRL]
    assert dev.registers.uart_baud == 9600


@given(st.integers(0, 0x2400 - 1), st.integers(1, 64), st.booleans(), st.booleans())
def test_pmp_single_entry_semantics(off, length, writable, overlap):
    dev, _, _ = make_device(app_size=100)
    entry = RegionSpec(dev.map.flash.start + 0x1000, 0x100)
    add_pmp_entry(dev, PmpEntry(entry, writable=writable))
    start = entry.start + (off % entry.length) if overlap else dev.map.flash.start + (off % 0x800)
    probe = RegionSpec(start, length)
    expected = Verdict.DENIED if probe.overlaps(entry) and not writable else Verdict.ALLOWED
    assert check_access(dev, probe, AccessMode.WRITE) is expected
