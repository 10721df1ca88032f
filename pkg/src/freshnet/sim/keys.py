"""Deterministic keypairs for simulated actors, derived by name."""

from __future__ import annotations

from freshnet.core.hashing import hash_blob
from freshnet.core.keys import Keypair


def named_keypair(name: str) -> Keypair:
    return Keypair.from_seed(hash_blob(b"freshnet/sim-key/" + name.encode()))


def validator_keypair(index: int) -> Keypair:
    return named_keypair(f"validator/{index}")


def org_keypair(org_id: str, role: str) -> Keypair:
    """role: collator | admin | operator | worker | intruder."""
    return named_keypair(f"org/{org_id}/{role}")
