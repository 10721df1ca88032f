"""Content-addressed primitives shared by every chain.

Hashing, canonical encoding, signatures, Merkle trees, and key-value
state with a state-root commitment.  Everything here is a pure function
of its inputs; no module in this package keeps global mutable state.
"""

from freshnet.core.codec import (
    DecodeError,
    Reader,
    Writer,
    canonical_decode,
    canonical_encode,
)
from freshnet.core.extrinsic import Extrinsic, sign_extrinsic
from freshnet.core.hashing import EMPTY_HASH, Hash, hash_blob
from freshnet.core.keys import AccountId, Keypair, verify
from freshnet.core.merkle import (
    EmptyLeaves,
    IndexOutOfRange,
    MerkleProof,
    merkle_prove,
    merkle_root,
    merkle_verify,
)
from freshnet.core.state import StateStore

__all__ = [
    "AccountId",
    "DecodeError",
    "EMPTY_HASH",
    "EmptyLeaves",
    "Extrinsic",
    "Hash",
    "IndexOutOfRange",
    "Keypair",
    "MerkleProof",
    "Reader",
    "StateStore",
    "Writer",
    "canonical_decode",
    "canonical_encode",
    "hash_blob",
    "merkle_prove",
    "merkle_root",
    "merkle_verify",
    "sign_extrinsic",
    "verify",
]
