"""Security-property checks A1-A12 over a finished scenario.

Each check reads only the finalized trace, the device snapshots taken before
and after the run, and the scenario configuration, so rerunning it on the
same inputs gives the same verdicts and witnesses. The ``checker`` column
names the technique behind each verdict: ``trace-LTL`` (finite-trace LTL
monitor), ``trace-scan`` (direct walk over events), ``snapshot-diff``
(device state comparison) or ``crypto-vector`` (known-answer tests against
an independent MAC implementation).
"""

from __future__ import annotations

import hmac as std_hmac
import hashlib
from dataclasses import dataclass, field
from typing import Any

from . import crypto, ltl
from .device import (CHIP_INFO_LEN, AccessMode, DeviceSnapshot, MapInvalid, RegionSpec,
                     Verdict)
from .frames import FRAME_PAYLOAD, FRAME_SIZE, HEADER_SIZE, Frame, verify_frame
from .protocol import derive_k1
from .trace import Event, EventKind, Trace

PROPERTY_NAMES = {
    "A1": "Start-up Checking",
    "A2": "Peripheral Initialization",
    "A3": "Secure Communication",
    "A4": "Key Confidentiality",
    "A5": "Access Control Enforcement",
    "A6": "Functional Correctness",
    "A7": "Atomicity",
    "A8": "Error Free Execution",
    "A9": "Controlled Invocation",
    "A10": "Attack Detection",
    "A11": "Secure Reflash",
    "A12": "Access Controls",
}

_NO_EARLY = "!(FRAME_VERIFY | MSG_SEND)"
A2_FORMULA = (f"({_NO_EARLY} U INIT_UART) & ({_NO_EARLY} U INIT_SPI) "
              f"& ({_NO_EARLY} U INIT_FLASH_CTRL)")
A7_FORMULA = "G (boot_active -> !IRQ)"
A9_FORMULA = "G (boot_active -> !(IRQ | DMA | DEBUG))"

# RFC 4231 test cases 1, 2, 3, 4, 6, 7: (key, data, HMAC-SHA256)
RFC4231_VECTORS = [
    (b"\x0b" * 20, b"Hi There",
     "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"),
    (b"Jefe", b"what do ya want for nothing?",
     "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"),
    (b"\xaa" * 20, b"\xdd" * 50,
     "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe"),
    (bytes(range(1, 26)), b"\xcd" * 50,
     "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b"),
    (b"\xaa" * 131, b"Test Using Larger Than Block-Size Key - Hash Key First",
     "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54"),
    (b"\xaa" * 131,
     b"This is a test using a larger than block-size key and a larger than block-size data. "
     b"The key needs to be hashed before being used by the HMAC algorithm.",
     "9b09ffa71b942fcb27635fbcd5b0e944bfdc63644f0713938a7f51535c3a35e2"),
]
SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


class IncompleteScenario(ValueError):
    pass


@dataclass
class ScenarioResult:
    config: Any  # needs .map, .reference_map, .baud
    trace: Trace | None
    device_before: DeviceSnapshot | None
    device_after: DeviceSnapshot | None
    verifier: Any = None
    prover: Any = None
    handshake: Any = None
    boot: Any = None
    report_match: bool | None = None


@dataclass(frozen=True)
class PropertyResult:
    property_id: str
    checker: str
    verdict: str  # "pass" | "fail"
    witness: tuple | None = None  # (first ordinal, last ordinal)
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @property
    def name(self) -> str:
        return PROPERTY_NAMES[self.property_id]


def _pass(pid, checker, detail=""):
    return PropertyResult(pid, checker, "pass", None, detail)


def _fail(pid, checker, witness, detail):
    if isinstance(witness, int):
        witness = (witness, witness)
    return PropertyResult(pid, checker, "fail", witness, detail)


def _first_ordinal(trace: Trace) -> int:
    return trace[0].ordinal if len(trace) else 0


def _ltl(pid, formula, trace, detail) -> PropertyResult:
    res = ltl.eval_ltl(ltl.parse(formula), trace)
    if res.holds:
        return _pass(pid, "trace-LTL", formula)
    w = res.witness if res.witness is not None else _first_ordinal(trace)
    return _fail(pid, "trace-LTL", w, f"{detail}; {formula} violated at #{w}")


def _is_attack_run(trace: Trace) -> bool:
    return any(e.kind is EventKind.ATTACK for e in trace)


def _rom_key(snap: DeviceSnapshot) -> bytes:
    region = snap.layout.key_region(snap.map)
    off = region.start - snap.map.rom.start
    return snap.rom[off:off + region.length]


def _chip_info(snap: DeviceSnapshot) -> bytes:
    off = snap.map.chip_info.start - snap.map.rom.start
    return snap.rom[off:off + CHIP_INFO_LEN]


def _golden_frame(snap: DeviceSnapshot, k: int) -> Frame:
    base = snap.layout.golden_offset + k * FRAME_SIZE
    return Frame.from_bytes(snap.rom[base:base + FRAME_SIZE])


# -- individual checks -----------------------------------------------------------------

def check_a1(sr: ScenarioResult) -> PropertyResult:
    cfg, trace, after = sr.config, sr.trace, sr.device_after
    try:
        cfg.map.validate()
    except MapInvalid as exc:
        return _fail("A1", "snapshot-diff", _first_ordinal(trace), f"map invalid: {exc}")
    startup = next((e.ordinal for e in trace if e.kind is EventKind.STARTUP), _first_ordinal(trace))
    if cfg.map != cfg.reference_map:
        diffs = [name for (name, a), (_, b) in zip(cfg.map.regions(), cfg.reference_map.regions()) if a != b]
        if len(cfg.map.regions()) != len(cfg.reference_map.regions()) or cfg.map.chip_info != cfg.reference_map.chip_info:
            diffs.append("layout")
        return _fail("A1", "snapshot-diff", startup, f"map differs from reference: {', '.join(diffs) or 'regions'}")
    if after.map != cfg.map:
        return _fail("A1", "snapshot-diff", startup, "device map differs from configured map")
    flash_start = cfg.map.flash.start
    for e in trace:
        if e.kind is EventKind.BOOT_START and e.get("measure_start") != flash_start:
            return _fail("A1", "snapshot-diff", e.ordinal,
                         f"boot measures from 0x{e.get('measure_start'):08x}, flash starts at 0x{flash_start:08x}")
    if after.layout.boot_start != flash_start:
        return _fail("A1", "snapshot-diff", startup, "boot start differs from flash start")
    return _pass("A1", "snapshot-diff", "map and boot start match reference")


def check_a2(sr: ScenarioResult) -> PropertyResult:
    regs = sr.device_after.registers
    if not (regs.uart_initialized and regs.spi_initialized and regs.flash_ctrl_initialized):
        return _fail("A2", "trace-LTL", _first_ordinal(sr.trace), "peripheral flags not all set")
    if regs.uart_baud <= 0 or regs.uart_baud != sr.config.baud:
        return _fail("A2", "trace-LTL", _first_ordinal(sr.trace), f"uart baud {regs.uart_baud} != {sr.config.baud}")
    return _ltl("A2", A2_FORMULA, sr.trace, "first FRAME_VERIFY/MSG_SEND precedes peripheral init")


def check_a3(sr: ScenarioResult) -> PropertyResult:
    key = _rom_key(sr.device_before)
    chip = _chip_info(sr.device_before)
    gens = [e for e in sr.trace if e.kind is EventKind.GEN_N2]
    for e in gens:
        n1 = bytes.fromhex(e.get("n1"))
        expected = crypto.hmac(key, crypto.xor_bytes(crypto.hash(chip), n1))
        if expected.hex() != e.get("n2"):
            return _fail("A3", "trace-scan", e.ordinal, "n2 does not match hmac(K, H(CI) ^ n1)")
    pr, vr = sr.prover, sr.verifier
    if pr is not None and pr.n1 is not None:
        if pr.n2 != crypto.hmac(key, crypto.xor_bytes(crypto.hash(chip), pr.n1)):
            return _fail("A3", "trace-scan", _first_ordinal(sr.trace), "prover session n2 inconsistent")
        if pr.k1 is not None and pr.k1 != derive_k1(key, pr.n1, pr.n2):
            return _fail("A3", "trace-scan", _first_ordinal(sr.trace), "prover session k1 inconsistent")
    if vr is not None and vr.k1 is not None and vr.k1 != derive_k1(key, vr.n1, vr.n2):
        return _fail("A3", "trace-scan", _first_ordinal(sr.trace), "verifier session k1 inconsistent")
    hs = sr.handshake
    if hs is not None and hs.authenticated:
        if not (vr.n1 == pr.n1 and vr.n2 == pr.n2 and vr.k1 == pr.k1):
            return _fail("A3", "trace-scan", _first_ordinal(sr.trace), "authenticated sessions disagree on n1/n2/k1")
    return _pass("A3", "trace-scan", f"{len(gens)} nonce derivation(s) recomputed")


def _pmp_decides(entries, region: RegionSpec, mode: str) -> str:
    # independent re-statement of first-match, default-allow PMP
    for entry in entries:
        r = entry.region
        if r.start < region.start + region.length and region.start < r.start + r.length:
            allowed = {"read": entry.readable, "write": entry.writable, "execute": entry.executable}[mode]
            return "allowed" if allowed else "denied"
    return "allowed"


def check_a4(sr: ScenarioResult) -> PropertyResult:
    snap = sr.device_after
    key_region = snap.layout.key_region(snap.map)
    if not snap.map.rom.contains(key_region):
        return _fail("A4", "trace-scan", _first_ordinal(sr.trace), "key region not inside rom")
    ci = RegionSpec(snap.map.chip_info.start, CHIP_INFO_LEN)
    if key_region.overlaps(ci):
        return _fail("A4", "trace-scan", _first_ordinal(sr.trace), "key overlaps the hashed chip-info window")
    for e in sr.trace:
        if (e.kind is EventKind.MEM_ACCESS and not e.get("privileged") and e.get("mode") == "read"
                and e.get("verdict") == Verdict.ALLOWED.value
                and RegionSpec(e.get("start"), e.get("length")).overlaps(key_region)):
            return _fail("A4", "trace-scan", e.ordinal, "unprivileged read of the key region was allowed")
    locked = [p for p in snap.pmp if p.locked]
    if _pmp_decides(snap.pmp, key_region, "read") != "denied" or not any(
            p.region.contains(key_region) and not p.readable for p in locked):
        return _fail("A4", "trace-scan", _first_ordinal(sr.trace), "key region is not read-locked by PMP")
    return _pass("A4", "trace-scan", "key in rom, read-locked, never read unprivileged")


def check_a5(sr: ScenarioResult) -> PropertyResult:
    before, after = sr.device_before.pmp, sr.device_after.pmp
    if tuple(after[:len(before)]) != tuple(before):
        return _fail("A5", "trace-scan", _first_ordinal(sr.trace), "pre-existing PMP entries changed")
    n = 0
    for e in sr.trace:
        if e.kind is not EventKind.MEM_ACCESS:
            continue
        n += 1
        if e.get("privileged"):
            if e.get("verdict") != "allowed":
                return _fail("A5", "trace-scan", e.ordinal, "privileged access recorded as denied")
            continue
        count = e.get("pmp")
        if count is None or count > len(after):
            return _fail("A5", "trace-scan", e.ordinal, "access references unknown PMP state")
        expected = _pmp_decides(after[:count], RegionSpec(e.get("start"), e.get("length")), e.get("mode"))
        if expected != e.get("verdict"):
            return _fail("A5", "trace-scan", e.ordinal, f"verdict {e.get('verdict')} but PMP says {expected}")
    return _pass("A5", "trace-scan", f"{n} memory accesses re-evaluated")


def crypto_vector_suite() -> list[str]:
    """Known-answer and cross-implementation checks; returns failure messages."""
    failures = []
    if crypto.hash(b"").hex() != SHA256_EMPTY:
        failures.append("sha256('') mismatch")
    for i, (key, data, want) in enumerate(RFC4231_VECTORS):
        if crypto.hmac(key, data).hex() != want:
            failures.append(f"RFC 4231 vector {i} mismatch")
    for klen in (1, 20, 64, 65, 131):
        for mlen in (0, 8, 54, 1032):
            key = bytes((7 * i + klen) & 0xFF for i in range(klen))
            msg = bytes((13 * i + mlen) & 0xFF for i in range(mlen))
            if crypto.hmac(key, msg) != std_hmac.new(key, msg, hashlib.sha256).digest():
                failures.append(f"hmac mismatch key={klen} msg={mlen}")
    return failures


def check_a6(sr: ScenarioResult) -> PropertyResult:
    failures = crypto_vector_suite()
    if failures:
        return _fail("A6", "crypto-vector", _first_ordinal(sr.trace), "; ".join(failures))
    return _pass("A6", "crypto-vector", "hash/hmac vectors agree")


def check_a7(sr: ScenarioResult) -> PropertyResult:
    return _ltl("A7", A7_FORMULA, sr.trace, "interrupt during boot")


def _halted(sr: ScenarioResult):
    starts = [e for e in sr.trace if e.kind is EventKind.BOOT_START]
    ends = [e for e in sr.trace if e.kind is EventKind.BOOT_END]
    if len(ends) < len(starts):
        return starts[-1]
    return None


def check_a8(sr: ScenarioResult) -> PropertyResult:
    halted = _halted(sr)
    if halted is not None:
        return _fail("A8", "trace-scan", halted.ordinal, "secure boot halted")
    if _is_attack_run(sr.trace):
        return _pass("A8", "trace-scan", "attack scenario: handled errors are expected")
    for e in sr.trace:
        bad = ("error" in e.attrs
               or (e.kind is EventKind.FRAME_VERIFY and e.get("verdict") == "fail")
               or (e.kind is EventKind.MEM_ACCESS and e.get("verdict") == "denied"))
        if bad:
            return _fail("A8", "trace-scan", e.ordinal, f"{e.kind.value} reports an error")
    if sr.handshake is not None and not sr.handshake.authenticated:
        return _fail("A8", "trace-scan", _first_ordinal(sr.trace), "handshake did not authenticate")
    if sr.report_match is False:
        return _fail("A8", "trace-scan", _first_ordinal(sr.trace), "attestation report mismatch")
    return _pass("A8", "trace-scan", "no errors in nominal run")


def check_a9(sr: ScenarioResult) -> PropertyResult:
    return _ltl("A9", A9_FORMULA, sr.trace, "interrupt/DMA/debugger during boot")


def _attacked_frames(trace: Trace, before_ordinal: int) -> set:
    out = set()
    for e in trace:
        if e.ordinal >= before_ordinal:
            break
        if e.kind is EventKind.ATTACK and e.get("action") == "corrupt_flash" \
                and e.get("changed") and e.get("frame", -1) >= 0:
            out.add(e.get("frame"))
    return out


def check_a10(sr: ScenarioResult) -> PropertyResult:
    starts = [e for e in sr.trace if e.kind is EventKind.BOOT_START]
    if not starts:
        return _pass("A10", "trace-scan", "no secure boot in this scenario")
    first = starts[0]
    corrupted = _attacked_frames(sr.trace, first.ordinal)
    fails = {}
    for e in sr.trace:
        if e.kind is EventKind.FRAME_VERIFY and e.get("verdict") == "fail" and e.ordinal > first.ordinal:
            fails.setdefault(e.get("frame_number"), e.ordinal)
    detected = set(fails)
    if detected != corrupted:
        missed = sorted(corrupted - detected)
        spurious = sorted(detected - corrupted)
        w = min(fails.values()) if spurious else first.ordinal
        return _fail("A10", "trace-scan", w, f"corrupted {sorted(corrupted)} detected {sorted(detected)}"
                     f" (missed {missed}, spurious {spurious})")
    return _pass("A10", "trace-scan", f"detected frames {sorted(detected)}")


def check_a11(sr: ScenarioResult) -> PropertyResult:
    before, after = sr.device_before, sr.device_after
    key = _rom_key(before)
    flash = after.map.flash
    triggers = [e for e in sr.trace if e.kind is EventKind.RE_TRIGGER]
    reflashes = {e.get("frame_number"): e for e in sr.trace if e.kind is EventKind.RE_REFLASH}
    for t in triggers:
        if t.get("frame_number") not in reflashes:
            return _fail("A11", "snapshot-diff", t.ordinal, "recovery triggered but nothing reflashed")
    for k, e in sorted(reflashes.items()):
        if not 0 <= k < after.layout.image_frames:
            return _fail("A11", "snapshot-diff", e.ordinal, f"frame {k} outside image")
        if e.get("start") != flash.start + k * FRAME_PAYLOAD or e.get("length") != FRAME_PAYLOAD:
            return _fail("A11", "snapshot-diff", e.ordinal, f"frame {k} reflashed at wrong location/size")
        golden = _golden_frame(before, k)
        if not verify_frame(key, golden, expected_number=k):
            return _fail("A11", "snapshot-diff", e.ordinal, f"golden frame {k} does not verify")
        off = k * FRAME_PAYLOAD
        hdr = after.layout.header_offset + k * HEADER_SIZE
        if after.flash[off:off + FRAME_PAYLOAD] != golden.payload \
                or after.flash[hdr:hdr + HEADER_SIZE] != golden.header.to_bytes():
            return _fail("A11", "snapshot-diff", e.ordinal, f"frame {k} differs from golden image")
    return _pass("A11", "snapshot-diff", f"{len(reflashes)} frame(s) match golden image")


def check_a12(sr: ScenarioResult) -> PropertyResult:
    after = sr.device_after
    locks = [e for e in sr.trace if e.kind is EventKind.RE_LOCK]
    for lock in locks:
        region = RegionSpec(lock.get("start"), lock.get("length"))
        if _pmp_decides(after.pmp, region, "write") != "denied":
            return _fail("A12", "trace-scan", lock.ordinal, f"frame {lock.get('frame_number')} still writable")
        probes = [e for e in sr.trace
                  if e.kind is EventKind.MEM_ACCESS and e.ordinal > lock.ordinal and not e.get("privileged")
                  and e.get("mode") == AccessMode.WRITE.value
                  and RegionSpec(e.get("start"), e.get("length")).overlaps(region)]
        if not probes:
            return _fail("A12", "trace-scan", lock.ordinal, f"no write probe after locking frame {lock.get('frame_number')}")
        allowed = [p for p in probes if p.get("verdict") != "denied"]
        if allowed:
            return _fail("A12", "trace-scan", allowed[0].ordinal, "unprivileged write into recovered region allowed")
    return _pass("A12", "trace-scan", f"{len(locks)} recovered region(s) write-locked")


CHECKS = [check_a1, check_a2, check_a3, check_a4, check_a5, check_a6,
          check_a7, check_a8, check_a9, check_a10, check_a11, check_a12]


def check_properties(sr: ScenarioResult) -> list[PropertyResult]:
    if sr.trace is None or sr.device_before is None or sr.device_after is None:
        raise IncompleteScenario("scenario lacks a trace or device snapshots")
    return [check(sr) for check in CHECKS]


def format_report(results: list[PropertyResult], title: str = "") -> str:
    lines = []
    if title:
        lines.append(f"# {title}")
    lines.append("# checker column: technique that established the verdict "
                 "(trace-LTL, trace-scan, snapshot-diff, crypto-vector)")
    lines.append(f"{'id':<4} {'property':<28} {'checker':<14} {'verdict':<7} witness")
    for r in results:
        w = "-" if r.witness is None else (f"#{r.witness[0]}" if r.witness[0] == r.witness[1]
                                           else f"#{r.witness[0]}..#{r.witness[1]}")
        lines.append(f"{r.property_id:<4} {r.name:<28} {r.checker:<14} {r.verdict:<7} {w}")
    passed = sum(r.passed for r in results)
    lines.append(f"# {passed}/{len(results)} pass")
    return "\n".join(lines) + "\n"


def format_sidecar(results: list[PropertyResult]) -> str:
    return "".join(f"{r.property_id} {r.verdict}\n" for r in results)
