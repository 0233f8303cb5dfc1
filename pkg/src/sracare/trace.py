"""Event traces: the append-only log every component writes into.

Line format (one event per line)::

    <ordinal> <KIND> key=value key=value ...

Values are decimal integers or whitespace-free strings; integers round-trip
as ``int``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator


class EventKind(str, enum.Enum):
    STARTUP = "STARTUP"
    INIT_UART = "INIT_UART"
    INIT_SPI = "INIT_SPI"
    INIT_FLASH_CTRL = "INIT_FLASH_CTRL"
    READ_CHIP_INFO = "READ_CHIP_INFO"
    GEN_N2 = "GEN_N2"
    MSG_SEND = "MSG_SEND"
    MSG_RECV = "MSG_RECV"
    BOOT_START = "BOOT_START"
    FRAME_VERIFY = "FRAME_VERIFY"
    RE_TRIGGER = "RE_TRIGGER"
    RE_REFLASH = "RE_REFLASH"
    RE_LOCK = "RE_LOCK"
    BOOT_END = "BOOT_END"
    RA_COMPUTE = "RA_COMPUTE"
    MEM_ACCESS = "MEM_ACCESS"
    ATTACK = "ATTACK"
    IRQ = "IRQ"
    DMA = "DMA"
    DEBUG = "DEBUG"


# attrs that must be present for a well-formed event of that kind
REQUIRED_ATTRS = {
    EventKind.FRAME_VERIFY: ("frame_number", "verdict"),
    EventKind.MEM_ACCESS: ("start", "length", "mode", "verdict"),
    EventKind.MSG_SEND: ("side", "tag"),
    EventKind.MSG_RECV: ("side", "tag"),
    EventKind.ATTACK: ("action",),
    EventKind.RE_REFLASH: ("frame_number", "start", "length"),
    EventKind.RE_LOCK: ("frame_number", "start", "length"),
}

_VALUE_RE = re.compile(r"^\S+$")
_INT_RE = re.compile(r"^-?\d+$")


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    ordinal: int
    kind: EventKind
    attrs: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.attrs.get(key, default)

    def to_line(self) -> str:
        parts = [str(self.ordinal), self.kind.value]
        parts.extend(f"{k}={v}" for k, v in self.attrs.items())
        return " ".join(parts)

    @classmethod
    def from_line(cls, line: str) -> "Event":
        tokens = line.split()
        if len(tokens) < 2:
            raise TraceError(f"malformed trace line: {line!r}")
        try:
            ordinal = int(tokens[0])
            kind = EventKind(tokens[1])
        except ValueError as exc:
            raise TraceError(f"malformed trace line: {line!r}") from exc
        attrs = {}
        for tok in tokens[2:]:
            key, sep, value = tok.partition("=")
            if not sep or not key:
                raise TraceError(f"malformed attribute {tok!r}")
            attrs[key] = int(value) if _INT_RE.match(value) else value
        return cls(ordinal, kind, attrs)


class Trace:
    """Append-only ordered event log.

    While ``boot_active`` is set, every appended event carries
    ``boot_active=1``; atomicity checks key off that attribute.
    """

    def __init__(self, events: Iterable[Event] = ()):
        self._events: list[Event] = list(events)
        self._next = self._events[-1].ordinal + 1 if self._events else 0
        self.boot_active = False
        self.frozen = False

    def emit(self, kind: EventKind, **attrs) -> Event:
        if self.frozen:
            raise TraceError("trace is finalized")
        for key, value in attrs.items():
            if isinstance(value, bool):
                attrs[key] = int(value)
            elif not isinstance(value, int) and not _VALUE_RE.match(str(value)):
                raise TraceError(f"attribute {key}={value!r} contains whitespace")
        if self.boot_active:
            attrs["boot_active"] = 1
        event = Event(self._next, EventKind(kind), attrs)
        self._next += 1
        self._events.append(event)
        return event

    def finalize(self) -> "Trace":
        self.frozen = True
        return self

    @property
    def events(self) -> tuple[Event, ...]:
        return tuple(self._events)

    def of_kind(self, *kinds: EventKind) -> list[Event]:
        return [e for e in self._events if e.kind in kinds]

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def __getitem__(self, index):
        return self._events[index]

    def dumps(self) -> str:
        return "".join(e.to_line() + "\n" for e in self._events)

    @classmethod
    def loads(cls, text: str) -> "Trace":
        events = [Event.from_line(ln) for ln in text.splitlines() if ln.strip()]
        for prev, cur in zip(events, events[1:]):
            if cur.ordinal <= prev.ordinal:
                raise TraceError(f"ordinal {cur.ordinal} not increasing")
        return cls(events).finalize()


def validate(trace: Trace) -> None:
    """Check ordinal monotonicity and per-kind required attributes."""
    last = None
    for event in trace:
        if last is not None and event.ordinal <= last:
            raise TraceError(f"ordinal {event.ordinal} not increasing")
        last = event.ordinal
        for key in REQUIRED_ATTRS.get(event.kind, ()):
            if key not in event.attrs:
                raise TraceError(f"{event.kind.value} #{event.ordinal} lacks {key}")
