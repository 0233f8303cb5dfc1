import random

import pytest

from sracare import crypto
from sracare.modelcheck import (HCI, K, DepthExceeded, Model, canonical, format_action,
                                initial_state, model_check)
from sracare.protocol import (AuthResult, Challenge, PPhase, ProverAuth, VerifierAuth, VPhase,
                              new_prover, new_verifier, prover_check_verifier, prover_respond,
                              verifier_auth, verifier_check_prover, verifier_receive_result)
from sracare.device import read_chip_info

from conftest import KEY, make_device

ALL = {"drop", "replay", "tamper_1bit"}


def test_no_adversary_never_fails():
    for d in (0, 4, 12):
        assert model_check(d, set()).holds


def test_depth_zero_trivial():
    r = model_check(0)
    assert r.holds and r.states == 1


def test_depth_ceiling():
    with pytest.raises(DepthExceeded):
        model_check(13)
    with pytest.raises(DepthExceeded):
        model_check(5, ceiling=4)


def test_unknown_power():
    with pytest.raises(ValueError):
        model_check(3, {"teleport"})


def test_leaked_key_counterexample_shortest():
    r = model_check(12, ALL, "leaked")
    assert not r.holds and len(r.counterexample) == 3
    assert [a[0] for a in r.counterexample] == ["start", "forge", "deliver"]
    assert format_action(r.counterexample[1]) == "forge(n1#0)"


def test_honest_moderate_depth():
    r = model_check(8)
    assert r.holds


def test_state_count_deterministic():
    assert model_check(9).states == model_check(9).states


def test_single_powers():
    for p in ALL:
        assert model_check(8, {p}).holds


def test_canonical_is_idempotent():
    m = Model(ALL)
    rng = random.Random(0)
    st = initial_state()
    for _ in range(10):
        succ = list(m.successors(st))
        _, st, _ = rng.choice(succ)
        c = canonical(st)
        assert canonical(c) == c


# -- concrete re-simulation ---------------------------------------------------------

class Concrete:
    """Runs the real protocol functions on bytes chosen to mirror the symbolic terms."""

    def __init__(self, seed):
        self.dev, _, _ = make_device(app_size=64)
        self.rng = random.Random(seed)
        self.n1s = {}
        self.vr = self.pr = None
        self.produced = set()
        self.chip_hash = crypto.hash(read_chip_info(self.dev))

    def eval(self, t):
        if t == K:
            return KEY
        if isinstance(t, int):
            return t
        head = t[0]
        if head == "n1":
            return self.n1s.setdefault(t[1], self.rng.randbytes(32))
        if head == "mac":
            return crypto.hmac(self.eval(t[1]), self.eval(t[2]))
        if head == "xor":
            assert t[1] == HCI
            return crypto.xor_bytes(self.chip_hash, self.eval(t[2]))
        if head == "k1":
            return crypto.xor_bytes(crypto.xor_bytes(self.eval(t[1]), self.eval(t[2])), self.eval(t[3]))
        if head == "flip":
            raw = bytearray(self.eval(t[1]))
            raw[t[2] // 8] ^= 0x80 >> (t[2] % 8)
            return bytes(raw)
        if head == "adv":
            return b"\xee" * 32
        raise AssertionError(t)

    def message(self, m):
        kind = m[0]
        if kind == "Challenge":
            return Challenge(self.eval(m[1]))
        if kind == "ProverAuth":
            return ProverAuth(self.eval(m[1]) + self.eval(m[2]))
        if kind == "VerifierAuth":
            return VerifierAuth(self.eval(m[1]))
        return AuthResult(m[1])

    def start(self, s):
        self.vr = new_verifier(KEY, 0, self.dev.trace)
        self.vr.n1 = self.eval(("n1", s))
        self.pr = new_prover(self.dev)
        from sracare.protocol import verifier_challenge
        verifier_challenge(self.vr)

    def deliver(self, dest, msg):
        """Returns (reply message or None, violation)."""
        if dest == "P":
            if isinstance(msg, Challenge) and self.pr.phase is PPhase.IDLE:
                reply = prover_respond(self.pr, msg)
                self.produced.add(reply.a[:32])
                return reply, False
            if isinstance(msg, VerifierAuth) and self.pr.phase is PPhase.RESPONDED:
                return prover_check_verifier(self.pr, msg), False
            return None, False
        if isinstance(msg, ProverAuth) and self.vr.phase is VPhase.CHALLENGED:
            ok, _ = verifier_check_prover(self.vr, msg)
            if not ok:
                return None, False
            bad = msg.a[:32] not in self.produced
            return verifier_auth(self.vr), bad
        if isinstance(msg, AuthResult) and self.vr.phase is VPhase.AWAITING_RESULT and self.vr.result is None:
            verifier_receive_result(self.vr, msg)
        return None, False

    def v_phase(self):
        if self.vr is None:
            return "Idle"
        if self.vr.phase is VPhase.AWAITING_RESULT and self.vr.result is not None:
            return "Authenticated"
        return self.vr.phase.value

    def p_phase(self):
        return "Idle" if self.pr is None else self.pr.phase.value


@pytest.mark.parametrize("keys", ["honest", "leaked"])
def test_random_paths_resimulate_concretely(keys):
    model = Model(ALL, leaked=keys == "leaked")
    rng = random.Random(2024)
    violations = 0
    for path_no in range(100 if keys == "honest" else 30):
        st = initial_state()
        conc = Concrete(path_no)
        inflight = None
        for _ in range(12):
            succ = list(model.successors(st))
            if not succ:
                break
            action, nxt, bad = rng.choice(succ)
            if action[0] == "start":
                conc.start(action[1])
                inflight = ("P", conc.message(nxt.inflight[1]))
                assert inflight[1] == Challenge(conc.vr.n1)
            elif action[0] == "deliver":
                dest, msg = inflight
                reply, cbad = conc.deliver(dest, msg)
                assert cbad == bad
                violations += cbad
                if nxt.inflight is None:
                    assert reply is None
                else:
                    assert reply == conc.message(nxt.inflight[1])
                    inflight = (nxt.inflight[0], reply)
            elif action[0] == "drop":
                inflight = None
            else:  # replay, tamper, forge: the adversary's new in-flight message
                inflight = (nxt.inflight[0], conc.message(nxt.inflight[1]))
            assert conc.v_phase() == nxt.v_phase
            assert conc.p_phase() == nxt.p_phase
            st = nxt
    if keys == "honest":
        assert violations == 0
