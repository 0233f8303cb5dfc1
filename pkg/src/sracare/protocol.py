"""Mutual-authentication handshake between verifier and prover.

Message flow (one session)::

    V -> P  Challenge(n1)
    P -> V  ProverAuth(A = hmac(K, n1) || n2)      n2 = hmac(K, H(chip_info) ^ n1)
    V -> P  VerifierAuth(B = hmac(k1, n2))         k1 = hmac(K, n1) ^ n1 ^ n2
    P -> V  AuthResult(C)
    V -> P  Command(F, Saddr, L)                   only when C == 1
    P -> V  Report(r, status)                      attestation path

Wire form: tag (1 octet) || body length (4 octets, big-endian) || body.
"""

from __future__ import annotations

import enum
import random
import struct
from dataclasses import dataclass, field

from . import crypto
from .attestation import Report
from .device import DeviceState, RegionSpec, fire_pending, read_chip_info, read_key
from .trace import EventKind, Trace

NONCE_SIZE = 32
DEFAULT_MSG_CAP = 16


class ProtocolError(Exception):
    pass


class WrongPhase(ProtocolError):
    pass


class MalformedMessage(ProtocolError):
    pass


class ChannelClosed(ProtocolError):
    pass


# -- messages ---------------------------------------------------------------

@dataclass(frozen=True)
class Challenge:
    n1: bytes


@dataclass(frozen=True)
class ProverAuth:
    a: bytes


@dataclass(frozen=True)
class VerifierAuth:
    b: bytes


@dataclass(frozen=True)
class AuthResult:
    c: int


@dataclass(frozen=True)
class Command:
    f: int
    d: RegionSpec


TAGS = {Challenge: 0x01, ProverAuth: 0x02, VerifierAuth: 0x03,
        AuthResult: 0x04, Command: 0x05, Report: 0x06}
TAG_NAMES = {0x01: "Challenge", 0x02: "ProverAuth", 0x03: "VerifierAuth",
             0x04: "AuthResult", 0x05: "Command", 0x06: "Report"}
BODY_SIZES = {0x01: 32, 0x02: 64, 0x03: 32, 0x04: 1, 0x05: 9, 0x06: 33}


def _flag(value: int, what: str) -> int:
    if value not in (0, 1):
        raise MalformedMessage(f"{what} flag must be 0 or 1, got {value}")
    return value


def encode(msg) -> bytes:
    tag = TAGS[type(msg)]
    if isinstance(msg, Challenge):
        body = msg.n1
    elif isinstance(msg, ProverAuth):
        body = msg.a
    elif isinstance(msg, VerifierAuth):
        body = msg.b
    elif isinstance(msg, AuthResult):
        body = bytes([_flag(msg.c, "C")])
    elif isinstance(msg, Command):
        body = bytes([_flag(msg.f, "F")]) + struct.pack(">II", msg.d.start, msg.d.length)
    else:
        body = msg.r + bytes([_flag(msg.status, "status")])
    if len(body) != BODY_SIZES[tag]:
        raise MalformedMessage(f"{TAG_NAMES[tag]} body must be {BODY_SIZES[tag]} octets, got {len(body)}")
    return bytes([tag]) + struct.pack(">I", len(body)) + body


def decode(wire: bytes):
    if len(wire) < 5:
        raise MalformedMessage("truncated header")
    tag = wire[0]
    (length,) = struct.unpack(">I", wire[1:5])
    body = bytes(wire[5:])
    if tag not in BODY_SIZES:
        raise MalformedMessage(f"unknown tag 0x{tag:02x}")
    if length != len(body) or length != BODY_SIZES[tag]:
        raise MalformedMessage(f"bad length {length} for {TAG_NAMES[tag]}")
    if tag == 0x01:
        return Challenge(body)
    if tag == 0x02:
        return ProverAuth(body)
    if tag == 0x03:
        return VerifierAuth(body)
    if tag == 0x04:
        return AuthResult(_flag(body[0], "C"))
    if tag == 0x05:
        start, size = struct.unpack(">II", body[1:])
        return Command(_flag(body[0], "F"), RegionSpec(start, size))
    return Report(body[:32], _flag(body[32], "status"))


# -- sessions ---------------------------------------------------------------

class VPhase(str, enum.Enum):
    IDLE = "Idle"
    CHALLENGED = "Challenged"
    PROVER_VERIFIED = "ProverVerified"
    AWAITING_RESULT = "AwaitingResult"
    COMMAND_SENT = "CommandSent"
    CLOSED = "Closed"
    DONE = "Done"


class PPhase(str, enum.Enum):
    IDLE = "Idle"
    RESPONDED = "Responded"
    AUTHENTICATED = "Authenticated"
    REJECTED = "Rejected"
    EXECUTING = "Executing"
    DONE = "Done"


@dataclass
class VerifierSession:
    key: bytes
    rng: random.Random
    n1: bytes | None = None
    n2: bytes | None = None
    k1: bytes | None = None
    phase: VPhase = VPhase.IDLE
    result: AuthResult | None = None
    trace: Trace = field(default_factory=Trace)


@dataclass
class ProverSession:
    device: DeviceState
    key: bytes
    n1: bytes | None = None
    n2: bytes | None = None
    k1: bytes | None = None
    phase: PPhase = PPhase.IDLE
    received: int = 0
    msg_cap: int = DEFAULT_MSG_CAP


def new_verifier(key: bytes, seed: int | random.Random = 0, trace: Trace | None = None) -> VerifierSession:
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    return VerifierSession(key=bytes(key), rng=rng, trace=trace if trace is not None else Trace())


def new_prover(dev: DeviceState, msg_cap: int = DEFAULT_MSG_CAP) -> ProverSession:
    # K comes from device ROM, never from the wire
    return ProverSession(device=dev, key=read_key(dev), msg_cap=msg_cap)


def _expect(phase, wanted) -> None:
    if phase is not wanted:
        raise WrongPhase(f"phase is {phase.value}, operation needs {wanted.value}")


def derive_k1(key: bytes, n1: bytes, n2: bytes) -> bytes:
    return crypto.xor_bytes(crypto.xor_bytes(crypto.hmac(key, n1), n1), n2)


def gen_n2(dev: DeviceState, n1: bytes, key: bytes | None = None) -> bytes:
    """Prover nonce: hmac(K, H(chip_info[0:16]) ^ n1)."""
    if len(n1) != NONCE_SIZE:
        raise MalformedMessage(f"n1 must be {NONCE_SIZE} octets")
    if key is None:
        key = read_key(dev)
    t = crypto.xor_bytes(crypto.hash(read_chip_info(dev)), n1)
    n2 = crypto.hmac(key, t)
    dev.trace.emit(EventKind.GEN_N2, n1=n1.hex(), n2=n2.hex())
    return n2


def verifier_challenge(sess: VerifierSession) -> Challenge:
    _expect(sess.phase, VPhase.IDLE)
    if sess.n1 is None:
        sess.n1 = sess.rng.randbytes(NONCE_SIZE)
    sess.phase = VPhase.CHALLENGED
    return Challenge(sess.n1)


def prover_respond(sess: ProverSession, msg: Challenge) -> ProverAuth:
    _expect(sess.phase, PPhase.IDLE)
    if len(msg.n1) != NONCE_SIZE:
        raise MalformedMessage("n1 must be 32 octets")
    n2 = gen_n2(sess.device, msg.n1, sess.key)
    sess.n1, sess.n2 = msg.n1, n2
    sess.phase = PPhase.RESPONDED
    return ProverAuth(crypto.hmac(sess.key, msg.n1) + n2)


def verifier_check_prover(sess: VerifierSession, msg: ProverAuth):
    """Returns ``(True, n2)`` on accept, ``(False, None)`` on reject."""
    _expect(sess.phase, VPhase.CHALLENGED)
    if len(msg.a) != 2 * NONCE_SIZE:
        raise MalformedMessage(f"A must be 64 octets, got {len(msg.a)}")
    if not crypto.mac_equal(msg.a[:32], crypto.hmac(sess.key, sess.n1)):
        sess.phase = VPhase.CLOSED
        return False, None
    sess.n2 = bytes(msg.a[32:])
    sess.k1 = derive_k1(sess.key, sess.n1, sess.n2)
    sess.phase = VPhase.PROVER_VERIFIED
    return True, sess.n2


def verifier_auth(sess: VerifierSession) -> VerifierAuth:
    _expect(sess.phase, VPhase.PROVER_VERIFIED)
    sess.phase = VPhase.AWAITING_RESULT
    return VerifierAuth(crypto.hmac(sess.k1, sess.n2))


def prover_check_verifier(sess: ProverSession, msg: VerifierAuth) -> AuthResult:
    _expect(sess.phase, PPhase.RESPONDED)
    sess.k1 = derive_k1(sess.key, sess.n1, sess.n2)
    if crypto.mac_equal(msg.b, crypto.hmac(sess.k1, sess.n2)):
        sess.phase = PPhase.AUTHENTICATED
        return AuthResult(1)
    sess.phase = PPhase.REJECTED
    return AuthResult(0)


def verifier_receive_result(sess: VerifierSession, msg: AuthResult) -> None:
    _expect(sess.phase, VPhase.AWAITING_RESULT)
    if sess.result is not None:
        raise WrongPhase("result already received")
    sess.result = msg
    if msg.c != 1:
        sess.phase = VPhase.CLOSED


def verifier_dispatch(sess: VerifierSession, result: AuthResult, f: int, d: RegionSpec):
    """Next action once authenticated: a Command, or None when the link closes."""
    _expect(sess.phase, VPhase.AWAITING_RESULT)
    if result.c != 1:
        sess.phase = VPhase.CLOSED
        return None
    sess.phase = VPhase.COMMAND_SENT
    return Command(_flag(f, "F"), d)


def prover_accept_command(sess: ProverSession, msg: Command) -> Command:
    _expect(sess.phase, PPhase.AUTHENTICATED)
    sess.phase = PPhase.EXECUTING
    return msg


def prover_finish(sess: ProverSession) -> None:
    _expect(sess.phase, PPhase.EXECUTING)
    sess.phase = PPhase.DONE


def verifier_finish(sess: VerifierSession) -> None:
    _expect(sess.phase, VPhase.COMMAND_SENT)
    sess.phase = VPhase.DONE


# -- channel and handshake driver ---------------------------------------------

class MessageChannel:
    """Ordered message-at-a-time link. The honest channel forwards verbatim."""

    def __init__(self):
        self.closed = False
        self.session = -1
        self.index = 0  # 1-based position of the last message in this session
        self.history: list[tuple[int, int, bytes]] = []  # (session, index, wire)
        self.trace = Trace()

    def begin_session(self) -> None:
        self.session += 1
        self.index = 0

    def transmit(self, sender: str, wire: bytes) -> list[bytes]:
        if self.closed:
            raise ChannelClosed("channel is closed")
        self.index += 1
        self.history.append((self.session, self.index, bytes(wire)))
        return self.deliver(sender, bytes(wire))

    def deliver(self, sender: str, wire: bytes) -> list[bytes]:
        return [wire]

    def close(self) -> None:
        self.closed = True


class Outcome(str, enum.Enum):
    AUTHENTICATED = "authenticated"
    CLOSED = "closed"


@dataclass
class HandshakeResult:
    outcome: Outcome
    reason: str = ""

    @property
    def authenticated(self) -> bool:
        return self.outcome is Outcome.AUTHENTICATED


def _tag_name(wire: bytes) -> str:
    return TAG_NAMES.get(wire[0], "unknown") if wire else "empty"


class _Handshake:
    """Delivery loop shared by every phase of a session.

    Each delivered message yields exactly one MSG_RECV event on the
    receiver's trace, emitted before any reply is sent.
    """

    def __init__(self, vr: VerifierSession, pr: ProverSession, channel: MessageChannel):
        self.vr, self.pr, self.channel = vr, pr, channel
        self.reason = ""

    def send(self, side: str, msg) -> None:
        wire = encode(msg)
        trace = self.vr.trace if side == "verifier" else self.pr.device.trace
        trace.emit(EventKind.MSG_SEND, side=side, tag=_tag_name(wire), size=len(wire),
                   session=self.channel.session, index=self.channel.index + 1)
        dest = "prover" if side == "verifier" else "verifier"
        for delivered in self.channel.transmit(side, wire):
            self.receive(dest, delivered)

    def fail(self, why: str) -> None:
        self.reason = self.reason or why

    def receive(self, side: str, wire: bytes) -> None:
        trace = self.vr.trace if side == "verifier" else self.pr.device.trace
        try:
            msg = decode(wire)
        except MalformedMessage as exc:
            trace.emit(EventKind.MSG_RECV, side=side, tag="malformed", error="malformed")
            self.fail(f"{side}: {exc}")
            if side == "verifier":
                self.close_verifier()
            else:
                self.admit_prover()
            return
        step = self.verifier_step if side == "verifier" else self.prover_step
        attrs, reply = step(msg)
        trace.emit(EventKind.MSG_RECV, side=side, tag=type(msg).__name__, **attrs)
        if reply is not None:
            self.send(side, reply)

    def close_verifier(self) -> None:
        if self.vr.phase not in (VPhase.CLOSED, VPhase.DONE):
            self.vr.phase = VPhase.CLOSED

    def admit_prover(self) -> bool:
        """Count a delivery against the prover's cap; False once it stops listening."""
        pr = self.pr
        pr.received += 1
        if pr.received > pr.msg_cap and pr.phase not in (PPhase.REJECTED, PPhase.DONE):
            pr.phase = PPhase.REJECTED
            self.fail("prover message cap exceeded")
        return pr.phase not in (PPhase.REJECTED, PPhase.DONE)

    def verifier_step(self, msg):
        vr = self.vr
        if vr.phase in (VPhase.CLOSED, VPhase.DONE):
            return {"ignored": 1}, None
        if isinstance(msg, ProverAuth) and vr.phase is VPhase.CHALLENGED:
            ok, _ = verifier_check_prover(vr, msg)
            if not ok:
                self.fail("prover authentication failed")
                return {"error": "auth_fail"}, None
            return {"verdict": "accept"}, verifier_auth(vr)
        if isinstance(msg, AuthResult) and vr.phase is VPhase.AWAITING_RESULT and vr.result is None:
            verifier_receive_result(vr, msg)
            if msg.c != 1:
                self.fail("prover rejected verifier (C=0)")
                return {"error": "rejected"}, None
            return {"verdict": "accept"}, None
        return {"ignored": 1}, None

    def prover_step(self, msg):
        pr = self.pr
        if not self.admit_prover():
            return {"ignored": 1}, None
        if isinstance(msg, Challenge) and pr.phase is PPhase.IDLE:
            return {}, prover_respond(pr, msg)
        if isinstance(msg, VerifierAuth) and pr.phase is PPhase.RESPONDED:
            result = prover_check_verifier(pr, msg)
            return ({"verdict": "accept"} if result.c else {"error": "auth_fail"}), result
        return {"ignored": 1}, None


def run_handshake(vr: VerifierSession, pr: ProverSession, channel: MessageChannel) -> HandshakeResult:
    """Drive Challenge -> ProverAuth -> VerifierAuth -> AuthResult over ``channel``."""
    if vr.phase is not VPhase.IDLE or pr.phase is not PPhase.IDLE:
        raise WrongPhase("handshake needs fresh sessions")
    if channel.closed:
        raise ChannelClosed("channel is closed")
    channel.begin_session()
    hs = _Handshake(vr, pr, channel)
    fire_pending(pr.device, "handshake")
    hs.send("verifier", verifier_challenge(vr))

    ok = (pr.phase is PPhase.AUTHENTICATED and vr.phase is VPhase.AWAITING_RESULT
          and vr.result is not None and vr.result.c == 1)
    if ok:
        return HandshakeResult(Outcome.AUTHENTICATED)
    if vr.phase is not VPhase.CLOSED:
        vr.phase = VPhase.CLOSED
    return HandshakeResult(Outcome.CLOSED, hs.reason or "handshake incomplete")


def send_command(vr: VerifierSession, pr: ProverSession, channel: MessageChannel,
                 f: int, d: RegionSpec):
    """Verifier dispatch and prover receipt of the Command.

    Returns the Command the prover accepted, or None if the link closed.
    """
    cmd = verifier_dispatch(vr, vr.result or AuthResult(0), f, d)
    if cmd is None:
        return None
    received = []

    class _Recv(_Handshake):
        def prover_step(self, msg):
            if self.admit_prover() and isinstance(msg, Command) and pr.phase is PPhase.AUTHENTICATED:
                received.append(prover_accept_command(pr, msg))
                return {"verdict": "accept"}, None
            return {"ignored": 1}, None

    _Recv(vr, pr, channel).send("verifier", cmd)
    return received[0] if received else None


def send_report(vr: VerifierSession, pr: ProverSession, channel: MessageChannel, report: Report):
    """Prover returns the attestation report; None if it never arrives."""
    received = []

    class _Recv(_Handshake):
        def verifier_step(self, msg):
            if isinstance(msg, Report) and vr.phase is VPhase.COMMAND_SENT and not received:
                received.append(msg)
                return {"verdict": "accept"}, None
            return {"ignored": 1}, None

    _Recv(vr, pr, channel).send("prover", report)
    return received[0] if received else None
