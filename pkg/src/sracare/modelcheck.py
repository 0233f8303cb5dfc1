"""Bounded explicit-state exploration of verifier x prover x adversary.

Values are symbolic terms (nested tuples): a MAC is its preimage
``("mac", key, msg)`` and two MACs are equal iff their preimages are, so the
adversary can only produce a valid MAC by replaying one or, when the key is
leaked, by computing it. Nonces and MAC fields are treated as 2-octet
values: a 1-bit tamper on a field wraps it as ``("flip", value, bit)`` with
``bit`` in ``0..FIELD_BITS-1``, and flipping the same bit twice restores the
original term.

The checked safety property: whenever the verifier accepts a ProverAuth
(phase ProverVerified), the MAC half it accepted was emitted by the honest
prover, i.e. an honest prover holding the same key answered this verifier's
challenge.

Breadth-first search gives shortest counterexamples; successor order is
fixed, so state counts and counterexamples are reproducible.

Two reductions keep depth 12 tractable. Bit positions are only ever
compared with each other, so any permutation of them applied to a whole
state is an automorphism: tampering only tries the bits already in use plus
one fresh bit, and states are stored with bits relabelled in order of first
appearance. States in which the verifier can no longer reach ProverVerified
(no open challenge and no sessions left) are counted but not expanded.
"""

from __future__ import annotations

from collections import deque
from functools import lru_cache
from dataclasses import dataclass

DEFAULT_CEILING = 12
FIELD_BITS = 16
POWERS = frozenset({"drop", "replay", "tamper_1bit"})

K = ("K",)
HCI = ("H", "chip_info")

# verifier phases
V_IDLE, V_CHAL, V_AWAIT, V_AUTH, V_CLOSED = "Idle", "Challenged", "AwaitingResult", "Authenticated", "Closed"
# prover phases
P_IDLE, P_RESP, P_AUTH, P_REJ = "Idle", "Responded", "Authenticated", "Rejected"

DEST = {"Challenge": "P", "VerifierAuth": "P", "ProverAuth": "V", "AuthResult": "V"}


class DepthExceeded(ValueError):
    pass


def mac(key, msg):
    return ("mac", key, msg)


def n2_of(n1):
    return mac(K, ("xor", HCI, n1))


def k1_of(n1, n2):
    return ("k1", mac(K, n1), n1, n2)


def flip(term, bit):
    if isinstance(term, tuple) and term and term[0] == "flip" and term[2] == bit:
        return term[1]
    return ("flip", term, bit)


@dataclass(frozen=True, slots=True)
class State:
    session: int
    v_phase: str
    v_n1: object
    v_n2: object
    p_phase: str
    p_n1: object
    p_n2: object
    inflight: object  # None or (dest, msg)
    knowledge: tuple  # honest messages the adversary has observed, canonical order
    produced: tuple  # MAC halves the honest prover has emitted


@dataclass
class ModelCheckResult:
    holds: bool
    counterexample: list | None
    states: int
    depth: int
    transitions: int

    @property
    def verdict(self) -> str:
        return "no_counterexample" if self.holds else "counterexample"


def _canon(items) -> tuple:
    return _intern(tuple(sorted(set(items), key=repr)))


def initial_state() -> State:
    return State(0, V_IDLE, None, None, P_IDLE, None, None, None, (), ())


class Model:
    def __init__(self, powers=frozenset(), leaked: bool = False, max_sessions: int = 2,
                 field_bits: int = FIELD_BITS):
        powers = frozenset(powers)
        unknown = powers - POWERS
        if unknown:
            raise ValueError(f"unknown adversary powers {sorted(unknown)}")
        self.powers = powers
        self.leaked = leaked
        self.max_sessions = max_sessions
        self.field_bits = field_bits

    # -- honest parties ---------------------------------------------------------

    def _emit(self, st: State, msg, **changes) -> State:
        knowledge = _canon(st.knowledge + (msg,))
        return _replace(st, inflight=(DEST[msg[0]], msg), knowledge=knowledge, **changes)

    def _deliver(self, st: State):
        """Returns (next_state, violation)."""
        dest, msg = st.inflight
        st = _replace(st, inflight=None)
        kind = msg[0]
        if dest == "P":
            if kind == "Challenge" and st.p_phase == P_IDLE:
                n1 = msg[1]
                n2 = n2_of(n1)
                a_mac = mac(K, n1)
                st = _replace(st, p_phase=P_RESP, p_n1=n1, p_n2=n2,
                              produced=_canon(st.produced + (a_mac,)))
                return self._emit(st, ("ProverAuth", a_mac, n2)), False
            if kind == "VerifierAuth" and st.p_phase == P_RESP:
                ok = msg[1] == mac(k1_of(st.p_n1, st.p_n2), st.p_n2)
                st = _replace(st, p_phase=P_AUTH if ok else P_REJ)
                return self._emit(st, ("AuthResult", 1 if ok else 0)), False
            return st, False
        if kind == "ProverAuth" and st.v_phase == V_CHAL:
            a_mac, n2 = msg[1], msg[2]
            if a_mac != mac(K, st.v_n1):
                return _replace(st, v_phase=V_CLOSED), False
            violation = a_mac not in st.produced
            b = mac(k1_of(st.v_n1, n2), n2)
            st = _replace(st, v_phase=V_AWAIT, v_n2=n2)
            return self._emit(st, ("VerifierAuth", b)), violation
        if kind == "AuthResult" and st.v_phase == V_AWAIT:
            return _replace(st, v_phase=V_AUTH if msg[1] == 1 else V_CLOSED), False
        return st, False

    def _start(self, st: State) -> State:
        n1 = ("n1", st.session)
        st = _replace(st, session=st.session + 1, v_phase=V_CHAL, v_n1=n1, v_n2=None,
                      p_phase=P_IDLE, p_n1=None, p_n2=None)
        return self._emit(st, ("Challenge", n1))

    # -- adversary ---------------------------------------------------------------

    def _tampers(self, msg, bits):
        kind = msg[0]
        if kind == "AuthResult":
            yield 1, 0, ("AuthResult", 1 - msg[1])
            return
        fresh = [b for b in range(self.field_bits) if b not in bits][:1]
        for field_index in range(1, len(msg)):
            for bit in sorted(bits) + fresh:
                out = list(msg)
                out[field_index] = flip(msg[field_index], bit)
                yield field_index, bit, tuple(out)

    def _forgeries(self, st: State):
        seen_n1 = _canon(m[1] for m in st.knowledge if m[0] == "Challenge")
        for n1 in seen_n1:
            yield n1, ("ProverAuth", mac(K, n1), ("adv", "n2"))

    def live(self, st: State) -> bool:
        """Whether a ProverVerified transition is still reachable."""
        return st.v_phase == V_CHAL or st.session < self.max_sessions

    def successors(self, st: State):
        """Yield (action, next_state, violation) in a fixed order."""
        if st.inflight is not None:
            nxt, bad = self._deliver(st)
            yield ("deliver", st.inflight[1][0]), nxt, bad
        elif st.v_phase in (V_IDLE, V_CLOSED, V_AUTH) and st.session < self.max_sessions:
            yield ("start", st.session), self._start(st), False
        if "drop" in self.powers and st.inflight is not None:
            yield ("drop", st.inflight[1][0]), _replace(st, inflight=None), False
        if "replay" in self.powers:
            for msg in st.knowledge:
                target = (DEST[msg[0]], msg)
                if target != st.inflight:
                    yield ("replay", msg), _replace(st, inflight=target), False
        if "tamper_1bit" in self.powers and st.inflight is not None:
            dest, msg = st.inflight
            for field_index, bit, tampered in self._tampers(msg, used_bits(st)):
                yield ("tamper", msg[0], field_index, bit), _replace(st, inflight=(dest, tampered)), False
        if self.leaked:
            for n1, forged in self._forgeries(st):
                target = ("V", forged)
                if target != st.inflight:
                    yield ("forge", n1), _replace(st, inflight=target), False


@lru_cache(maxsize=1 << 16)
def _bits_of(term) -> tuple:
    """Bit labels inside ``term`` in order of first appearance."""
    if not isinstance(term, tuple):
        return ()
    if term and term[0] == "flip":
        inner = _bits_of(term[1])
        return inner if term[2] in inner else inner + (term[2],)
    out: tuple = ()
    for x in term:
        for bit in _bits_of(x):
            if bit not in out:
                out += (bit,)
    return out


@lru_cache(maxsize=1 << 16)
def _rename(term, mapping: tuple):
    if not isinstance(term, tuple) or not _bits_of(term):
        return term
    if term[0] == "flip":
        return ("flip", _rename(term[1], mapping), mapping[term[2]])
    return tuple(_rename(x, mapping) for x in term)


def used_bits(st: State) -> list:
    return list(_bits_of((st.v_n1, st.v_n2, st.p_n1, st.p_n2, st.inflight, st.knowledge, st.produced)))


def canonical(st: State) -> State:
    """Relabel bit positions 0, 1, ... in order of first appearance."""
    for _ in range(3):
        bits = used_bits(st)
        if bits == list(range(len(bits))):
            return st
        mapping = [0] * (max(bits) + 1)
        for i, b in enumerate(bits):
            mapping[b] = i
        mapping = tuple(mapping)
        st = State(st.session, st.v_phase, _rename(st.v_n1, mapping), _rename(st.v_n2, mapping),
                   st.p_phase, _rename(st.p_n1, mapping), _rename(st.p_n2, mapping),
                   _rename(st.inflight, mapping), _canon(_rename(st.knowledge, mapping)),
                   _canon(_rename(st.produced, mapping)))
    return st


_FIELDS = tuple(State.__dataclass_fields__)
_INTERN: dict = {}


def _intern(value):
    return _INTERN.setdefault(value, value)


def _replace(st: State, **changes) -> State:
    return State(*[changes[f] if f in changes else getattr(st, f) for f in _FIELDS])


def model_check(max_depth: int = DEFAULT_CEILING, adversary_powers=POWERS, keys: str = "honest",
                ceiling: int = DEFAULT_CEILING, max_sessions: int = 2,
                field_bits: int = FIELD_BITS) -> ModelCheckResult:
    if max_depth > ceiling:
        raise DepthExceeded(f"depth {max_depth} exceeds ceiling {ceiling}")
    if max_depth < 0:
        raise ValueError("depth must be non-negative")
    if keys not in ("honest", "leaked"):
        raise ValueError("keys must be 'honest' or 'leaked'")
    model = Model(adversary_powers, keys == "leaked", max_sessions, field_bits)
    _INTERN.clear()
    start = canonical(initial_state())
    parent: dict = {start: None}
    frontier = deque([start])
    transitions = 0
    for level in range(max_depth):
        nxt_frontier = deque()
        for st in frontier:
            if not model.live(st):
                continue
            for action, nxt, bad in model.successors(st):
                nxt = canonical(nxt)
                transitions += 1
                if bad:
                    path = [action]
                    cur = st
                    while parent[cur] is not None:
                        cur, act = parent[cur]
                        path.append(act)
                    path.reverse()
                    if nxt not in parent:
                        parent[nxt] = (st, action)
                    _INTERN.clear()
                    return ModelCheckResult(False, path, len(parent), level + 1, transitions)
                if nxt not in parent:
                    parent[nxt] = (st, action)
                    nxt_frontier.append(nxt)
        frontier = nxt_frontier
        if not frontier:
            break
    _INTERN.clear()
    return ModelCheckResult(True, None, len(parent), max_depth, transitions)


def format_action(action) -> str:
    head, *rest = action
    return head + "(" + ", ".join(_fmt_term(r) for r in rest) + ")"


def _fmt_term(t) -> str:
    if isinstance(t, tuple):
        if t and t[0] == "mac":
            return f"mac({_fmt_term(t[1])}, {_fmt_term(t[2])})"
        if t and t[0] == "flip":
            return f"flip({_fmt_term(t[1])}, bit{t[2]})"
        if t and t[0] == "n1":
            return f"n1#{t[1]}"
        if t == K:
            return "K"
        return "(" + ", ".join(_fmt_term(x) for x in t) + ")"
    return str(t)
