"""Project-wide content hashing.

One fixed algorithm everywhere: SHA-256, 32-byte digests.  Every
commitment in the system (state roots, extrinsic roots, outbound-message
roots, block hashes, payload references) is a SHA-256 digest, so two
independently-built components agree byte for byte.
"""

from __future__ import annotations

import hashlib

# A Hash is plain bytes of length 32.  An alias keeps signatures readable
# without wrapping every digest in a class.
Hash = bytes

DIGEST_SIZE = 32

#: Digest of the empty byte string; doubles as the root of empty
#: collections (empty state, empty extrinsic list, empty outbound list).
EMPTY_HASH: Hash = hashlib.sha256(b"").digest()


def hash_blob(data: bytes) -> Hash:
    """Return the 32-byte SHA-256 digest of *data*."""
    return hashlib.sha256(data).digest()


def hash_concat(left: Hash, right: Hash) -> Hash:
    """Digest of two child digests, used for interior Merkle nodes."""
    return hashlib.sha256(left + right).digest()
