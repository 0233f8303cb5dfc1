"""Finite-trace LTL.

Semantics over a finite word of length n, evaluated at position 0:
atoms are false past the end, ``X p`` is false at the last position,
``G``/``F``/``U`` quantify over the remaining positions only (``U`` is the
strong until). On the empty trace ``G p`` holds and ``F p`` does not.

The evaluator runs the usual backward recurrences. Each per-position value
is an int used as a bitset, so a batch of equal-length traces can be scored
in one pass (bit j = trace j); a single trace is a batch of one.

ASCII syntax::

    G (BOOT_START -> F BOOT_END)
    !(FRAME_VERIFY | MSG_SEND) U INIT_UART
    G (boot_active -> !(IRQ | DMA | DEBUG))
    F FRAME_VERIFY[verdict=fail]

Precedence, tightest first: ``! X G F``, ``U``, ``&``, ``|``, ``->``
(``U`` and ``->`` associate to the right).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .trace import Event, EventKind, Trace


class LtlError(ValueError):
    pass


class ParseError(LtlError):
    pass


class UnknownProposition(LtlError):
    pass


@dataclass(frozen=True)
class Prop:
    name: str


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Not:
    arg: object


@dataclass(frozen=True)
class Next:
    arg: object


@dataclass(frozen=True)
class Globally:
    arg: object


@dataclass(frozen=True)
class Finally:
    arg: object


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Implies:
    left: object
    right: object


@dataclass(frozen=True)
class Until:
    left: object
    right: object


UNARY = (Not, Next, Globally, Finally)
BINARY = (And, Or, Implies, Until)
_UNARY_SYM = {Not: "!", Next: "X ", Globally: "G ", Finally: "F "}
_BINARY_SYM = {And: "&", Or: "|", Implies: "->", Until: "U"}


def to_text(f) -> str:
    if isinstance(f, Prop):
        return f.name
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, UNARY):
        return f"{_UNARY_SYM[type(f)]}{to_text(f.arg)}" if isinstance(f.arg, (Prop, Const)) \
            else f"{_UNARY_SYM[type(f)]}({to_text(f.arg)})"
    return f"({to_text(f.left)} {_BINARY_SYM[type(f)]} {to_text(f.right)})"


def depth(f) -> int:
    if isinstance(f, (Prop, Const)):
        return 1
    if isinstance(f, UNARY):
        return 1 + depth(f.arg)
    return 1 + max(depth(f.left), depth(f.right))


def propositions(f) -> set[str]:
    if isinstance(f, Prop):
        return {f.name}
    if isinstance(f, Const):
        return set()
    if isinstance(f, UNARY):
        return propositions(f.arg)
    return propositions(f.left) | propositions(f.right)


# -- parser -----------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(->|[()!&|]|[A-Za-z_][\w.]*(?:\[[^\]]*\])?)")
_KEYWORDS = {"X": Next, "G": Globally, "F": Finally}


def _tokenize(text: str) -> list[str]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected input at {pos}: {text[pos:pos + 10]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expected=None):
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise ParseError(f"expected {expected or 'token'}, got {tok!r}")
        self.i += 1
        return tok

    def implies(self):
        left = self.disj()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.implies())
        return left

    def disj(self):
        left = self.conj()
        while self.peek() == "|":
            self.take()
            left = Or(left, self.conj())
        return left

    def conj(self):
        left = self.until()
        while self.peek() == "&":
            self.take()
            left = And(left, self.until())
        return left

    def until(self):
        left = self.unary()
        if self.peek() == "U":
            self.take()
            return Until(left, self.until())
        return left

    def unary(self):
        tok = self.peek()
        if tok == "!":
            self.take()
            return Not(self.unary())
        if tok in _KEYWORDS:
            self.take()
            return _KEYWORDS[tok](self.unary())
        if tok == "(":
            self.take()
            inner = self.implies()
            self.take(")")
            return inner
        if tok in ("true", "false"):
            self.take()
            return Const(tok == "true")
        if tok is None or tok in (")", "&", "|", "->", "U"):
            raise ParseError(f"expected a formula, got {tok!r}")
        self.take()
        return Prop(tok)


def parse(text: str):
    p = _Parser(_tokenize(text))
    f = p.implies()
    if p.peek() is not None:
        raise ParseError(f"trailing input {p.peek()!r}")
    return f


# -- propositions over events --------------------------------------------------------

Predicate = Callable[[Event], bool]


def _kind_is(kind: EventKind) -> Predicate:
    return lambda e: e.kind is kind


DEFAULT_PROPS: dict[str, Predicate] = {k.value: _kind_is(k) for k in EventKind}
DEFAULT_PROPS["boot_active"] = lambda e: bool(e.attrs.get("boot_active"))
DEFAULT_PROPS["error"] = lambda e: "error" in e.attrs

_PATTERN = re.compile(r"^(\w+)\[([^\]]*)\]$")


def resolve(name: str, props: Mapping[str, Predicate]) -> Predicate:
    """Named predicate, or ``KIND[key=value,...]`` matching kind and attrs."""
    if name in props:
        return props[name]
    m = _PATTERN.match(name)
    if m and m.group(1) in props:
        base = props[m.group(1)]
        wanted = {}
        for item in filter(None, (s.strip() for s in m.group(2).split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise UnknownProposition(f"bad attribute filter in {name!r}")
            wanted[key] = value
        return lambda e: base(e) and all(str(e.attrs.get(k)) == v for k, v in wanted.items())
    raise UnknownProposition(f"unknown proposition {name!r}")


# -- evaluation -------------------------------------------------------------------------

def satisfaction(f, labels: Mapping[str, Sequence[int]], length: int, full: int = 1,
                 memo: dict | None = None) -> list[int]:
    """Truth of ``f`` at positions 0..length as bitsets.

    ``labels[name][i]`` is the bitset of traces whose event i satisfies
    proposition ``name``. Entry ``length`` of the result is the value on the
    empty suffix (what position 0 means for an empty trace).
    """
    if memo is None:
        memo = {}
    key = (f, length)
    hit = memo.get(key)
    if hit is not None:
        return hit
    n = length
    if isinstance(f, Prop):
        if f.name not in labels:
            raise UnknownProposition(f"no labels for proposition {f.name!r}")
        out = [labels[f.name][i] for i in range(n)] + [0]
    elif isinstance(f, Const):
        out = [full if f.value else 0] * (n + 1)
    elif isinstance(f, Not):
        out = [full & ~v for v in satisfaction(f.arg, labels, n, full, memo)]
    elif isinstance(f, (And, Or, Implies)):
        a = satisfaction(f.left, labels, n, full, memo)
        b = satisfaction(f.right, labels, n, full, memo)
        if isinstance(f, And):
            out = [x & y for x, y in zip(a, b)]
        elif isinstance(f, Or):
            out = [x | y for x, y in zip(a, b)]
        else:
            out = [(full & ~x) | y for x, y in zip(a, b)]
    elif isinstance(f, Next):
        a = satisfaction(f.arg, labels, n, full, memo)
        out = [a[i + 1] if i + 1 < n else 0 for i in range(n)] + [0]
    else:
        out = [0] * (n + 1)
        if isinstance(f, Globally):
            a = satisfaction(f.arg, labels, n, full, memo)
            out[n] = full
            for i in range(n - 1, -1, -1):
                out[i] = a[i] & out[i + 1]
        elif isinstance(f, Finally):
            a = satisfaction(f.arg, labels, n, full, memo)
            for i in range(n - 1, -1, -1):
                out[i] = a[i] | out[i + 1]
        elif isinstance(f, Until):
            a = satisfaction(f.left, labels, n, full, memo)
            b = satisfaction(f.right, labels, n, full, memo)
            for i in range(n - 1, -1, -1):
                out[i] = b[i] | (a[i] & out[i + 1])
        else:
            raise LtlError(f"not a formula node: {f!r}")
    memo[key] = out
    return out


def labels_for(events: Sequence[Event], names, props: Mapping[str, Predicate] = DEFAULT_PROPS) -> dict:
    preds = {name: resolve(name, props) for name in names}
    return {name: [1 if pred(e) else 0 for e in events] for name, pred in preds.items()}


@dataclass(frozen=True)
class LtlResult:
    holds: bool
    witness: int | None = None  # ordinal of the first violating event


def _witness(f, events, labels, memo) -> int | None:
    if not events:
        return None
    n = len(events)
    if isinstance(f, Globally):
        vals = satisfaction(f.arg, labels, n, 1, memo)
        for i in range(n):
            if not vals[i]:
                return events[i].ordinal
    if isinstance(f, And):
        if not satisfaction(f.left, labels, n, 1, memo)[0]:
            return _witness(f.left, events, labels, memo)
        return _witness(f.right, events, labels, memo)
    return events[0].ordinal


def eval_ltl(f, trace: Trace | Sequence[Event], props: Mapping[str, Predicate] = DEFAULT_PROPS) -> LtlResult:
    if isinstance(f, str):
        f = parse(f)
    events = list(trace)
    labels = labels_for(events, propositions(f), props)
    memo: dict = {}
    if satisfaction(f, labels, len(events), 1, memo)[0]:
        return LtlResult(True)
    return LtlResult(False, _witness(f, events, labels, memo))
