import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sracare import crypto
from sracare.adversary import AdversarialChannel, AttackScript, DropMsg, Flood, ReplayMsg, TamperMsg
from sracare.attestation import Report
from sracare.device import RegionSpec, read_chip_info
from sracare.protocol import (AuthResult, Challenge, ChannelClosed, Command, MalformedMessage,
                              MessageChannel, PPhase, ProverAuth, VerifierAuth, VPhase, WrongPhase,
                              decode, derive_k1, encode, new_prover, new_verifier, run_handshake,
                              send_command, send_report, verifier_challenge)
from sracare.trace import EventKind

from conftest import KEY, make_device


def handshake(seed=0, script=None, cap=16):
    dev, _, _ = make_device(app_size=100)
    vr = new_verifier(KEY, seed, dev.trace)
    pr = new_prover(dev, cap)
    ch = AdversarialChannel(script or AttackScript(), dev.trace)
    return vr, pr, ch, run_handshake(vr, pr, ch)


def test_honest_handshake():
    vr, pr, _, res = handshake()
    assert res.authenticated
    assert vr.n1 == pr.n1 and vr.n2 == pr.n2 and vr.k1 == pr.k1


def test_nonce_derivation_independent():
    vr, pr, _, _ = handshake(3)
    ci = read_chip_info(pr.device)
    t = bytes(a ^ b for a, b in zip(crypto.hash(ci), vr.n1))
    assert pr.n2 == crypto.hmac(KEY, t)
    k1 = bytes(a ^ b ^ c for a, b, c in zip(crypto.hmac(KEY, vr.n1), vr.n1, vr.n2))
    assert derive_k1(KEY, vr.n1, vr.n2) == k1


def test_message_sizes():
    assert len(encode(Challenge(bytes(32)))) == 37
    assert len(encode(ProverAuth(bytes(64)))) == 69
    assert len(encode(VerifierAuth(bytes(32)))) == 37
    assert len(encode(AuthResult(1))) == 6
    assert len(encode(Command(1, RegionSpec(0x10, 0x20)))) == 14
    assert len(encode(Report(bytes(32), 1))) == 38


@pytest.mark.parametrize("msg", [Challenge(bytes(range(32))), ProverAuth(bytes(64)), VerifierAuth(b"\x07" * 32),
                                 AuthResult(0), AuthResult(1), Command(0, RegionSpec(1, 2)),
                                 Report(b"\x01" * 32, 1)])
def test_codec_round_trip(msg):
    assert decode(encode(msg)) == msg


@pytest.mark.parametrize("wire", [b"", b"\x01", b"\x09\x00\x00\x00\x00", b"\x04\x00\x00\x00\x01\x02",
                                  b"\x01\x00\x00\x00\x20" + bytes(31)])
def test_decode_malformed(wire):
    with pytest.raises(MalformedMessage):
        decode(wire)


def test_wrong_phase():
    vr = new_verifier(KEY)
    verifier_challenge(vr)
    with pytest.raises(WrongPhase):
        verifier_challenge(vr)


def test_wrong_key_prover_rejected():
    dev, _, _ = make_device(app_size=100)
    vr = new_verifier(b"\x99" * 32, 1, dev.trace)
    res = run_handshake(vr, new_prover(dev), MessageChannel())
    assert not res.authenticated and vr.phase is VPhase.CLOSED


def test_closed_channel():
    ch = MessageChannel()
    ch.close()
    with pytest.raises(ChannelClosed):
        ch.transmit("verifier", b"x")


def test_one_recv_per_delivery():
    vr, pr, ch, _ = handshake()
    recv = [e for e in pr.device.trace if e.kind is EventKind.MSG_RECV]
    sent = [e for e in pr.device.trace if e.kind is EventKind.MSG_SEND]
    assert len(recv) == len(sent) == 4


def test_drop_closes():
    _, _, _, res = handshake(script=AttackScript((DropMsg(3),)))
    assert not res.authenticated


def test_flood_capped():
    vr, pr, _, res = handshake(script=AttackScript((Flood(40, 1),)))
    assert not res.authenticated
    assert pr.phase is PPhase.REJECTED


def test_small_flood_tolerated():
    _, _, _, res = handshake(script=AttackScript((Flood(3, 1),)))
    assert res.authenticated


def test_command_and_report_flow():
    vr, pr, ch, res = handshake()
    cmd = send_command(vr, pr, ch, 0, RegionSpec(0, 64))
    assert cmd == Command(0, RegionSpec(0, 64)) and pr.phase is PPhase.EXECUTING
    got = send_report(vr, pr, ch, Report(b"\x01" * 32, 1))
    assert got == Report(b"\x01" * 32, 1)


def test_command_not_sent_after_reject():
    vr, pr, ch, res = handshake(script=AttackScript((TamperMsg(4, 47),)))
    assert not res.authenticated
    with pytest.raises(WrongPhase):
        send_command(vr, pr, ch, 1, RegionSpec(0, 1))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([1, 2, 3, 4]), st.data())
def test_any_single_bit_tamper_rejected(seed, msg, data):
    size = {1: 37, 2: 69, 3: 37, 4: 6}[msg]
    bit = data.draw(st.integers(0, size * 8 - 1))
    _, _, _, res = handshake(seed, AttackScript((TamperMsg(msg, bit),)))
    assert not res.authenticated


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**16))
def test_replay_of_previous_session(seed):
    dev, _, _ = make_device(app_size=100)
    ch = AdversarialChannel(AttackScript((ReplayMsg(1, session=1), ReplayMsg(2, session=1),
                                          ReplayMsg(3, session=1), ReplayMsg(4, session=1))), dev.trace)
    assert run_handshake(new_verifier(KEY, seed, dev.trace), new_prover(dev), ch).authenticated
    res = run_handshake(new_verifier(KEY, seed + 1, dev.trace), new_prover(dev), ch)
    assert not res.authenticated
