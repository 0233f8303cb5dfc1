"""Runtime remote attestation over a verifier-chosen flash region.

Regions here are flash-relative: ``d.start`` is an offset from the flash
base, matching the Saddr/L payload carried by the Command message.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import crypto
from .device import DeviceState, RegionSpec, fire_pending, read_mem
from .trace import EventKind


class RegionInvalid(ValueError):
    pass


@dataclass(frozen=True)
class Report:
    r: bytes
    status: int = 1


def _check_region(d: RegionSpec, size: int) -> None:
    if d.length < 1 or d.start < 0 or d.end > size:
        raise RegionInvalid(f"region {d} not inside [0, {size})")


def attest_region(dev: DeviceState, key: bytes, d: RegionSpec) -> Report:
    _check_region(d, dev.map.flash.length)
    fire_pending(dev, "ra")
    data = read_mem(dev, dev.map.flash.start + d.start, d.length, privileged=True)
    dev.trace.emit(EventKind.RA_COMPUTE, start=d.start, length=d.length)
    return Report(crypto.hmac(key, data), 1)


def verify_report(expected_image: bytes, key: bytes, d: RegionSpec, report: Report) -> bool:
    _check_region(d, len(expected_image))
    expected = crypto.hmac(key, bytes(expected_image[d.start:d.end]))
    return report.status == 1 and crypto.mac_equal(report.r, expected)
