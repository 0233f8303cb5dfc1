"""Hash and keyed-MAC primitives.

``hash`` is plain SHA-256. ``hmac`` is built by hand from the two-pass
construction (inner and outer padded key) so the construction itself can be
checked against independent implementations.
"""

from __future__ import annotations

import hashlib

BLOCK_SIZE = 64
DIGEST_SIZE = 32
IPAD = 0x36
OPAD = 0x5C


def hash(m: bytes) -> bytes:  # noqa: A001 - mirrors the notation H(m)
    return hashlib.sha256(bytes(m)).digest()


def xor_bytes(a: bytes, b: bytes) -> bytes:
    """Octet-wise XOR of two equal-length byte strings."""
    if len(a) != len(b):
        raise ValueError(f"xor length mismatch: {len(a)} != {len(b)}")
    return bytes(x ^ y for x, y in zip(a, b))


def derive_kprime(key: bytes) -> bytes:
    """Normalize a MAC key: keys longer than one block are hashed first.

    Shorter keys are returned as-is; zero padding to the block size happens
    inside :func:`hmac`.
    """
    key = bytes(key)
    if len(key) > BLOCK_SIZE:
        return hash(key)
    return key


def hmac(key: bytes, m: bytes) -> bytes:
    """HMAC-SHA256: H((K' ^ opad) || H((K' ^ ipad) || m))."""
    kprime = derive_kprime(key).ljust(BLOCK_SIZE, b"\x00")
    inner_key = bytes(b ^ IPAD for b in kprime)
    outer_key = bytes(b ^ OPAD for b in kprime)
    return hash(outer_key + hash(inner_key + bytes(m)))


def mac_equal(a: bytes, b: bytes) -> bool:
    # full-length comparison; timing side channels are not modeled
    return len(a) == len(b) and bytes(a) == bytes(b)
