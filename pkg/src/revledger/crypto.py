"""Hashing, signing and key material for the revocation ledger.

Every digest in the system is SHA-256. Signatures are Ed25519; public
keys carry a one-byte algorithm tag in front of the raw key bytes so a
future scheme change does not need a new serialization format.

``verify`` memoizes successful checks. The ledger re-validates the same
certificate chains on almost every submission, and signature
verification is a pure function of (key, message, signature), so the
cache is safe and removes the dominant cost from long honest runs.
"""
from __future__ import annotations

import hashlib
import os

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DIGEST_SIZE = 32
SIGNATURE_SIZE = 64
ALG_ED25519 = 0x01
PUBLIC_KEY_SIZE = 1 + 32  # algorithm tag + raw Ed25519 key
KEY_SEED_SIZE = 32


class CryptoError(Exception):
    """Malformed cryptographic material."""


class InvalidKey(CryptoError):
    """Bytes that do not parse as a supported public key."""


class Digest(bytes):
    """A SHA-256 output. Displays as lowercase hex."""

    __slots__ = ()

    def __new__(cls, value: bytes) -> "Digest":
        if len(value) != DIGEST_SIZE:
            raise CryptoError(f"digest must be {DIGEST_SIZE} bytes, got {len(value)}")
        return bytes.__new__(cls, value)

    def __repr__(self) -> str:
        return f"Digest({self.hex()})"

    def __str__(self) -> str:
        return self.hex()


ZERO_DIGEST = Digest(bytes(DIGEST_SIZE))


def sha256(data: bytes) -> Digest:
    return Digest(hashlib.sha256(data).digest())


class Signature(bytes):
    __slots__ = ()

    def __new__(cls, value: bytes) -> "Signature":
        if len(value) != SIGNATURE_SIZE:
            raise CryptoError(f"signature must be {SIGNATURE_SIZE} bytes, got {len(value)}")
        return bytes.__new__(cls, value)

    def __repr__(self) -> str:
        return f"Signature({self.hex()})"


class PublicKey(bytes):
    """Tagged verification key: one algorithm byte followed by the raw key."""

    __slots__ = ()

    def __new__(cls, value: bytes) -> "PublicKey":
        if len(value) != PUBLIC_KEY_SIZE:
            raise InvalidKey(f"public key must be {PUBLIC_KEY_SIZE} bytes, got {len(value)}")
        if value[0] != ALG_ED25519:
            raise InvalidKey(f"unsupported key algorithm 0x{value[0]:02x}")
        return bytes.__new__(cls, value)

    @property
    def raw(self) -> bytes:
        return bytes(self[1:])

    def __repr__(self) -> str:
        return f"PublicKey({self.hex()})"


class KeyPair:
    """An Ed25519 signing key plus its tagged public half.

    Keys are derived from a 32-byte seed, which is also the persisted
    form (see ``to_bytes``). Harness code passes seeds from a seeded RNG
    so whole scenario transcripts stay reproducible.
    """

    __slots__ = ("_private", "_seed", "public")

    def __init__(self, seed: bytes):
        if len(seed) != KEY_SEED_SIZE:
            raise CryptoError(f"key seed must be {KEY_SEED_SIZE} bytes")
        self._seed = bytes(seed)
        self._private = Ed25519PrivateKey.from_private_bytes(self._seed)
        raw = self._private.public_key().public_bytes_raw()
        self.public = PublicKey(bytes([ALG_ED25519]) + raw)

    @classmethod
    def generate(cls) -> "KeyPair":
        return cls(os.urandom(KEY_SEED_SIZE))

    def sign(self, message: bytes) -> Signature:
        return Signature(self._private.sign(message))

    def to_bytes(self) -> bytes:
        return bytes([ALG_ED25519]) + self._seed

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeyPair":
        if len(data) != 1 + KEY_SEED_SIZE or data[0] != ALG_ED25519:
            raise InvalidKey("malformed key pair bytes")
        return cls(data[1:])

    def __repr__(self) -> str:
        return f"KeyPair(public={self.public.hex()})"


# Successful verifications keyed by (key, signature, message digest).
# Bounded by wholesale eviction; a miss only costs the real check.
_VERIFY_CACHE: dict[tuple[bytes, bytes, bytes], bool] = {}
_VERIFY_CACHE_LIMIT = 1 << 18


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Check an Ed25519 signature. False on a bad signature, InvalidKey
    if the key bytes themselves are malformed."""
    key = public_key if isinstance(public_key, PublicKey) else PublicKey(public_key)
    if len(signature) != SIGNATURE_SIZE:
        return False
    cache_key = (bytes(key), bytes(signature), hashlib.sha256(message).digest())
    hit = _VERIFY_CACHE.get(cache_key)
    if hit is not None:
        return hit
    try:
        Ed25519PublicKey.from_public_bytes(key.raw).verify(bytes(signature), message)
        ok = True
    except InvalidSignature:
        ok = False
    if len(_VERIFY_CACHE) >= _VERIFY_CACHE_LIMIT:
        _VERIFY_CACHE.clear()
    _VERIFY_CACHE[cache_key] = ok
    return ok
