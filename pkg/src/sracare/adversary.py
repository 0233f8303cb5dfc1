"""Scriptable attacker for the channel and the device.

Channel actions address messages by their 1-based position within a
session (1 = Challenge, 2 = ProverAuth, 3 = VerifierAuth, 4 = AuthResult,
5 = Command, 6 = Report) and optionally by 0-based session number. Bit
positions run MSB-first over the whole wire encoding, header included.

Script syntax, one action per line::

    seed 7
    tamper msg=2 bit=7
    replay recorded=2 session=1
    drop msg=3
    flood msg=1 count=20
    corrupt_flash offset=0x801 value=0xFF
    corrupt_flash offset=0x801 xor=0x01
    redirect_boot start=0x20000000
    inject_irq phase=boot
    inject_dma phase=boot
    attach_debugger phase=boot
    read_key phase=startup

``bit=rand`` draws a position from the script's seeded generator.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Union

from .device import (DeviceState, RegionSpec, parse_int, read_mem,
                     schedule_event)
from .frames import FRAME_PAYLOAD
from .protocol import MessageChannel
from .trace import EventKind, Trace

PHASES = ("startup", "handshake", "boot", "ra", "post")


class AttackError(ValueError):
    pass


class OffsetInvalid(AttackError):
    pass


@dataclass(frozen=True)
class ReplayMsg:
    recorded_index: int  # 1-based over everything the channel has carried
    msg_index: int | None = None  # slot to overwrite; default: the recorded slot
    session: int | None = None


@dataclass(frozen=True)
class TamperMsg:
    msg_index: int
    bit_position: int | None  # None: drawn from the script seed
    session: int | None = None


@dataclass(frozen=True)
class DropMsg:
    msg_index: int
    session: int | None = None


@dataclass(frozen=True)
class Flood:
    count: int
    msg_index: int = 1
    session: int | None = None


@dataclass(frozen=True)
class CorruptFlash:
    offset: int  # flash-relative
    value: int
    xor: bool = False


@dataclass(frozen=True)
class RedirectBoot:
    new_start: int
    stage_copy: bool = True


@dataclass(frozen=True)
class InjectIrq:
    during: str


@dataclass(frozen=True)
class InjectDma:
    during: str


@dataclass(frozen=True)
class AttachDebugger:
    during: str


@dataclass(frozen=True)
class ReadKey:
    during: str


ChannelAction = Union[ReplayMsg, TamperMsg, DropMsg, Flood]
DeviceAction = Union[CorruptFlash, RedirectBoot, InjectIrq, InjectDma, AttachDebugger, ReadKey]
CHANNEL_ACTIONS = (ReplayMsg, TamperMsg, DropMsg, Flood)
DEVICE_ACTIONS = (CorruptFlash, RedirectBoot, InjectIrq, InjectDma, AttachDebugger, ReadKey)


@dataclass(frozen=True)
class AttackScript:
    actions: tuple = ()
    seed: int = 0

    def channel_actions(self) -> list:
        return [a for a in self.actions if isinstance(a, CHANNEL_ACTIONS)]

    def device_actions(self) -> list:
        return [a for a in self.actions if isinstance(a, DEVICE_ACTIONS)]


_VERBS = {
    "replay": ReplayMsg, "tamper": TamperMsg, "drop": DropMsg, "flood": Flood,
    "corrupt_flash": CorruptFlash, "redirect_boot": RedirectBoot,
    "inject_irq": InjectIrq, "inject_dma": InjectDma,
    "attach_debugger": AttachDebugger, "read_key": ReadKey,
}
_NAMES = {cls: verb for verb, cls in _VERBS.items()}


def _opt(kv, key):
    return parse_int(kv[key]) if key in kv else None


def _phase(kv, line):
    phase = kv.get("phase", kv.get("during"))
    if phase not in PHASES:
        raise AttackError(f"{line!r}: phase must be one of {PHASES}")
    return phase


def parse_action(line: str):
    verb, *rest = line.split()
    kv = {}
    for tok in rest:
        key, sep, value = tok.partition("=")
        if not sep:
            raise AttackError(f"{line!r}: expected key=value, got {tok!r}")
        kv[key] = value
    try:
        if verb == "replay":
            return ReplayMsg(parse_int(kv["recorded"]), _opt(kv, "msg"), _opt(kv, "session"))
        if verb == "tamper":
            bit = None if kv.get("bit", "rand") == "rand" else parse_int(kv["bit"])
            return TamperMsg(parse_int(kv["msg"]), bit, _opt(kv, "session"))
        if verb == "drop":
            return DropMsg(parse_int(kv["msg"]), _opt(kv, "session"))
        if verb == "flood":
            return Flood(parse_int(kv["count"]), parse_int(kv.get("msg", "1")), _opt(kv, "session"))
        if verb == "corrupt_flash":
            if "xor" in kv:
                return CorruptFlash(parse_int(kv["offset"]), parse_int(kv["xor"]), xor=True)
            return CorruptFlash(parse_int(kv["offset"]), parse_int(kv["value"]))
        if verb == "redirect_boot":
            stage = kv.get("stage", "1") not in ("0", "no", "false")
            return RedirectBoot(parse_int(kv["start"]), stage)
        if verb in ("inject_irq", "inject_dma", "attach_debugger", "read_key"):
            return _VERBS[verb](_phase(kv, line))
    except KeyError as exc:
        raise AttackError(f"{line!r}: missing {exc.args[0]}") from exc
    except ValueError as exc:
        raise AttackError(f"{line!r}: {exc}") from exc
    raise AttackError(f"unknown attack verb {verb!r}")


def parse_script(text: str, seed: int = 0) -> AttackScript:
    actions = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("seed"):
            seed = parse_int(line.replace("=", " ").split()[1])
            continue
        actions.append(parse_action(line))
    return AttackScript(tuple(actions), seed)


def format_action(action) -> str:
    verb = _NAMES[type(action)]
    if isinstance(action, ReplayMsg):
        parts = [f"recorded={action.recorded_index}"]
        if action.msg_index is not None:
            parts.append(f"msg={action.msg_index}")
    elif isinstance(action, TamperMsg):
        bit = "rand" if action.bit_position is None else action.bit_position
        parts = [f"msg={action.msg_index}", f"bit={bit}"]
    elif isinstance(action, DropMsg):
        parts = [f"msg={action.msg_index}"]
    elif isinstance(action, Flood):
        parts = [f"msg={action.msg_index}", f"count={action.count}"]
    elif isinstance(action, CorruptFlash):
        parts = [f"offset=0x{action.offset:x}",
                 f"{'xor' if action.xor else 'value'}=0x{action.value:02x}"]
    elif isinstance(action, RedirectBoot):
        parts = [f"start=0x{action.new_start:08x}"] + ([] if action.stage_copy else ["stage=0"])
    else:
        parts = [f"phase={action.during}"]
    session = getattr(action, "session", None)
    if session is not None:
        parts.append(f"session={session}")
    return " ".join([verb] + parts)


def format_script(script: AttackScript) -> str:
    return "".join([f"seed {script.seed}\n"] + [format_action(a) + "\n" for a in script.actions])


# -- channel adversary ------------------------------------------------------------

def flip_bit(wire: bytes, bit: int) -> bytes:
    out = bytearray(wire)
    out[bit // 8] ^= 0x80 >> (bit % 8)
    return bytes(out)


class AdversarialChannel(MessageChannel):
    """Forwards messages, applying the script's channel actions at their slots."""

    def __init__(self, script: AttackScript, trace: Trace | None = None):
        super().__init__()
        self.script = script
        self.rng = random.Random(script.seed)
        if trace is not None:
            self.trace = trace

    def _matching(self, kind):
        for action in self.script.actions:
            if not isinstance(action, kind):
                continue
            if action.session is not None and action.session != self.session:
                continue
            yield action

    def _recorded_slot(self, global_index: int):
        if 1 <= global_index <= len(self.history) - 1:  # never the message in flight
            return self.history[global_index - 1]
        return None

    def _attack(self, action, **attrs) -> None:
        self.trace.emit(EventKind.ATTACK, action=_NAMES[type(action)],
                        session=self.session, msg=self.index, **attrs)

    def deliver(self, sender: str, wire: bytes) -> list[bytes]:
        for action in self._matching(DropMsg):
            if action.msg_index == self.index:
                self._attack(action)
                return []
        for action in self._matching(ReplayMsg):
            recorded = self._recorded_slot(action.recorded_index)
            if recorded is None:
                continue
            slot = recorded[1] if action.msg_index is None else action.msg_index
            if slot == self.index:
                wire = recorded[2]
                self._attack(action, recorded=action.recorded_index)
        for action in self._matching(TamperMsg):
            if action.msg_index != self.index:
                continue
            bit = action.bit_position
            if bit is None:
                bit = self.rng.randrange(len(wire) * 8)
            if 0 <= bit < len(wire) * 8:
                wire = flip_bit(wire, bit)
                self._attack(action, bit=bit)
        copies = [wire]
        for action in self._matching(Flood):
            if action.msg_index == self.index:
                copies.extend([wire] * action.count)
                self._attack(action, count=action.count)
        return copies


def adversarial_channel(script: AttackScript, trace: Trace | None = None) -> AdversarialChannel:
    return AdversarialChannel(script, trace)


# -- device adversary ---------------------------------------------------------------

_INJECT_KINDS = {InjectIrq: EventKind.IRQ, InjectDma: EventKind.DMA, AttachDebugger: EventKind.DEBUG}


def corrupted_frame(dev: DeviceState, offset: int) -> int | None:
    """Frame number whose payload or header covers a flash-relative offset."""
    layout = dev.layout
    if offset < layout.image_frames * FRAME_PAYLOAD:
        return offset // FRAME_PAYLOAD
    rel = offset - layout.header_offset
    if 0 <= rel < layout.image_frames * 40:
        return rel // 40
    return None


def apply_device_attack(dev: DeviceState, action) -> None:
    trace = dev.trace
    if isinstance(action, CorruptFlash):
        if not 0 <= action.offset < dev.map.flash.length:
            raise OffsetInvalid(f"offset 0x{action.offset:x} outside flash")
        old = dev.flash[action.offset]
        new = (old ^ action.value if action.xor else action.value) & 0xFF
        dev.flash[action.offset] = new  # physical tamper: no PMP mediation
        frame = corrupted_frame(dev, action.offset)
        trace.emit(EventKind.ATTACK, action="corrupt_flash", offset=action.offset, old=old, new=new,
                   changed=int(old != new), frame=-1 if frame is None else frame)
    elif isinstance(action, RedirectBoot):
        size = dev.layout.image_frames * FRAME_PAYLOAD
        target = RegionSpec(action.new_start, size)
        windows = [(dev.map.flash, dev.flash), (dev.map.ram, dev.ram)]
        hit = next(((w, s) for w, s in windows if w.contains(target)), None)
        if hit is None:
            raise OffsetInvalid(f"redirect target {target} not inside flash or ram")
        if action.stage_copy:
            # attacker mirrors the genuine payloads so the redirected measurement passes
            window, store = hit
            off = target.start - window.start
            src = bytes(dev.flash[:size])
            store[off:off + size] = src
        dev.layout = replace(dev.layout, boot_start=action.new_start)
        trace.emit(EventKind.ATTACK, action="redirect_boot", start=action.new_start)
    elif isinstance(action, tuple(_INJECT_KINDS)):
        schedule_event(dev, action.during, _INJECT_KINDS[type(action)], source="attack")
        trace.emit(EventKind.ATTACK, action=_NAMES[type(action)], during=action.during)
    elif isinstance(action, ReadKey):
        region = dev.layout.key_region(dev.map)

        def probe(d, region=region):
            read_mem(d, region.start, region.length, privileged=False)

        schedule_event(dev, action.during, probe)
        trace.emit(EventKind.ATTACK, action="read_key", during=action.during)
    else:
        raise AttackError(f"{type(action).__name__} is not a device action")


def apply_script_to_device(dev: DeviceState, script: AttackScript) -> None:
    for action in script.device_actions():
        apply_device_attack(dev, action)
