"""Accounts and signatures.

Ed25519 throughout: 32-byte public keys identify accounts 1:1, signatures
are 64 bytes and deterministic, so identical inputs produce identical
chain bytes on every run.  Secret keys are the 32-byte Ed25519 seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

# An AccountId is the raw 32-byte Ed25519 public key.
AccountId = bytes

ACCOUNT_SIZE = 32
SIGNATURE_SIZE = 64

# Verification is by far the hottest crypto path: relay validators
# re-verify the same extrinsic bytes the collator already checked.
# Results are memoized on (key, message, signature); entries are tiny
# and the corpus per process is bounded, so no eviction.
_verify_cache: dict[bytes, bool] = {}


class MalformedSignature(ValueError):
    """Raised when key or signature material has the wrong shape."""


@dataclass(frozen=True)
class Keypair:
    """An Ed25519 keypair; ``seed`` is the 32-byte secret."""

    seed: bytes
    public: AccountId

    @classmethod
    def from_seed(cls, seed: bytes) -> "Keypair":
        if len(seed) != 32:
            raise MalformedSignature(f"seed must be 32 bytes, got {len(seed)}")
        private = Ed25519PrivateKey.from_private_bytes(seed)
        public = private.public_key().public_bytes_raw()
        return cls(seed=seed, public=public)

    @property
    def account(self) -> AccountId:
        return self.public

    def sign(self, message: bytes) -> bytes:
        private = Ed25519PrivateKey.from_private_bytes(self.seed)
        return private.sign(message)


def verify(account: AccountId, message: bytes, signature: bytes) -> bool:
    """True iff *signature* is a valid Ed25519 signature by *account*.

    Malformed key or signature material raises MalformedSignature; a
    well-formed but wrong signature returns False.
    """
    if len(account) != ACCOUNT_SIZE:
        raise MalformedSignature(f"account must be {ACCOUNT_SIZE} bytes")
    if len(signature) != SIGNATURE_SIZE:
        raise MalformedSignature(f"signature must be {SIGNATURE_SIZE} bytes")
    cache_key = hashlib.sha256(account + signature + message).digest()
    hit = _verify_cache.get(cache_key)
    if hit is not None:
        return hit
    try:
        Ed25519PublicKey.from_public_bytes(account).verify(signature, message)
        result = True
    except InvalidSignature:
        result = False
    _verify_cache[cache_key] = result
    return result
