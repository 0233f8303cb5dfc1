import hashlib
import hmac as std_hmac

import pytest
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives import hmac as ossl_hmac
from hypothesis import given, settings
from hypothesis import strategies as st

from sracare import crypto
from sracare.properties import RFC4231_VECTORS, SHA256_EMPTY, crypto_vector_suite


def openssl_hmac(key, msg):
    h = ossl_hmac.HMAC(key, hashes.SHA256())
    h.update(msg)
    return h.finalize()


def test_sha256_empty_known_answer():
    assert crypto.hash(b"").hex() == SHA256_EMPTY


def test_sha256_abc_known_answer():
    assert crypto.hash(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


@pytest.mark.parametrize("key,data,want", RFC4231_VECTORS)
def test_rfc4231_vectors(key, data, want):
    # the table itself is checked against two independent implementations
    assert std_hmac.new(key, data, hashlib.sha256).hexdigest() == want
    assert openssl_hmac(key, data).hex() == want
    assert crypto.hmac(key, data).hex() == want


@pytest.mark.parametrize("klen", [1, 20, 64, 65, 131])
@pytest.mark.parametrize("mlen", [0, 8, 54, 1032])
def test_hmac_matches_openssl_grid(klen, mlen):
    key = bytes((31 * i + 7) & 0xFF for i in range(klen))
    msg = bytes((17 * i + 3) & 0xFF for i in range(mlen))
    assert crypto.hmac(key, msg) == openssl_hmac(key, msg)


def test_kprime_short_key_untouched():
    assert crypto.derive_kprime(b"\x01" * 64) == b"\x01" * 64


def test_kprime_long_key_hashed():
    key = b"\x02" * 65
    assert crypto.derive_kprime(key) == hashlib.sha256(key).digest()


def test_xor_length_mismatch():
    with pytest.raises(ValueError):
        crypto.xor_bytes(b"ab", b"abc")


def test_xor_self_is_zero():
    assert crypto.xor_bytes(b"\x5a\xa5", b"\x5a\xa5") == b"\x00\x00"


def test_mac_equal_length_sensitive():
    assert not crypto.mac_equal(b"abc", b"abcd")
    assert crypto.mac_equal(b"abc", bytearray(b"abc"))


def test_vector_suite_clean():
    assert crypto_vector_suite() == []


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=0, max_size=200), st.binary(max_size=2000))
def test_hmac_matches_stdlib(key, msg):
    assert crypto.hmac(key, msg) == std_hmac.new(key, msg, hashlib.sha256).digest()


@given(st.binary(max_size=64), st.binary(max_size=64))
def test_xor_involution(a, b):
    b = (b * (len(a) // max(len(b), 1) + 1))[:len(a)] if b else bytes(len(a))
    assert crypto.xor_bytes(crypto.xor_bytes(a, b), b) == a
