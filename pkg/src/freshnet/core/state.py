"""Key-value chain state with a Merkle state-root commitment.

Keys and values are byte strings; iteration order is key-lexicographic.
The state root is the Merkle root over the canonical encoding of each
(key, value) entry in key order, so the root is a pure function of the
entry set: reinserting an identical entry set yields an identical root.

Entry leaf hashes are cached and maintained incrementally; the tree is
rebuilt from cached leaf hashes on demand.
"""

from __future__ import annotations

from bisect import bisect_left, insort

from freshnet.core.codec import Reader, Writer
from freshnet.core.hashing import EMPTY_HASH, Hash, hash_blob, hash_concat


def _entry_leaf(key: bytes, value: bytes) -> bytes:
    w = Writer()
    w.blob(key)
    w.blob(value)
    return w.finish()


class StateStore:
    """Ordered map from byte keys to byte values with a root commitment."""

    __slots__ = ("_entries", "_keys", "_leaf_hashes", "_root", "_dirty")

    def __init__(self) -> None:
        self._entries: dict[bytes, bytes] = {}
        self._keys: list[bytes] = []
        self._leaf_hashes: dict[bytes, Hash] = {}
        self._root: Hash = EMPTY_HASH
        self._dirty = False

    def get(self, key: bytes) -> bytes | None:
        return self._entries.get(key)

    def contains(self, key: bytes) -> bool:
        return key in self._entries

    def set(self, key: bytes, value: bytes) -> None:
        if key not in self._entries:
            insort(self._keys, key)
        self._entries[key] = value
        self._leaf_hashes[key] = hash_blob(_entry_leaf(key, value))
        self._dirty = True

    def delete(self, key: bytes) -> None:
        if key in self._entries:
            del self._entries[key]
            del self._leaf_hashes[key]
            idx = bisect_left(self._keys, key)
            self._keys.pop(idx)
            self._dirty = True

    def items(self) -> list[tuple[bytes, bytes]]:
        """All entries in key-lexicographic order."""
        return [(k, self._entries[k]) for k in self._keys]

    def keys_with_prefix(self, prefix: bytes) -> list[bytes]:
        lo = bisect_left(self._keys, prefix)
        out = []
        for i in range(lo, len(self._keys)):
            if not self._keys[i].startswith(prefix):
                break
            out.append(self._keys[i])
        return out

    def __len__(self) -> int:
        return len(self._entries)

    def root(self) -> Hash:
        """State root; EMPTY_HASH for an empty store."""
        if self._dirty:
            self._root = self._compute_root()
            self._dirty = False
        return self._root

    def _compute_root(self) -> Hash:
        if not self._keys:
            return EMPTY_HASH
        level = [self._leaf_hashes[k] for k in self._keys]
        while len(level) > 1:
            if len(level) % 2 == 1:
                level.append(level[-1])
            level = [hash_concat(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        return level[0]

    def copy(self) -> "StateStore":
        clone = StateStore.__new__(StateStore)
        clone._entries = dict(self._entries)
        clone._keys = list(self._keys)
        clone._leaf_hashes = dict(self._leaf_hashes)
        clone._root = self._root
        clone._dirty = self._dirty
        return clone

    # Snapshot encoding: the sorted entry list, length-prefixed.  Used by
    # genesis export and by tests that round-trip whole states.

    def encode_into(self, w: Writer) -> None:
        w.u32(len(self._keys))
        for key in self._keys:
            w.blob(key)
            w.blob(self._entries[key])

    @classmethod
    def decode_from(cls, r: Reader) -> "StateStore":
        count = r.u32()
        store = cls()
        for _ in range(count):
            key = r.blob()
            value = r.blob()
            store.set(key, value)
        return store
