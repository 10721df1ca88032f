"""Binary Merkle trees over raw leaf payloads.

Leaves are hashed with :func:`hash_blob` before tree construction.
Padding rule: a level with an odd node count duplicates its last node.
A single leaf is its own root (root = leaf hash, empty proof).

Proofs carry the leaf index, bottom-up sibling digests, and the leaf
count of the committed tree; verification recomputes the root exactly
and additionally checks the proof depth matches the committed tree, so
extended or truncated sibling lists fail.
"""

from __future__ import annotations

from dataclasses import dataclass

from freshnet.core.codec import Reader, Writer
from freshnet.core.hashing import DIGEST_SIZE, Hash, hash_blob, hash_concat


class EmptyLeaves(ValueError):
    """Raised when a root is requested for zero leaves."""


class IndexOutOfRange(IndexError):
    """Raised when a proof is requested for a leaf index >= leaf count."""


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    siblings: tuple[Hash, ...]
    leaf_count: int

    def encode_into(self, w: Writer) -> None:
        w.u64(self.leaf_index)
        w.seq(list(self.siblings), lambda w_, s: w_.fixed(s, DIGEST_SIZE))
        w.u64(self.leaf_count)

    @classmethod
    def decode_from(cls, r: Reader) -> "MerkleProof":
        index = r.u64()
        siblings = tuple(r.seq(lambda r_: r_.fixed(DIGEST_SIZE)))
        count = r.u64()
        return cls(index, siblings, count)


def _levels(leaves: list[bytes]) -> list[list[Hash]]:
    """All tree levels bottom-up, starting from the hashed leaves."""
    if not leaves:
        raise EmptyLeaves("merkle tree needs at least one leaf")
    level = [hash_blob(leaf) for leaf in leaves]
    levels = [level]
    while len(level) > 1:
        if len(level) % 2 == 1:
            level = level + [level[-1]]
            levels[-1] = level
        level = [hash_concat(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        levels.append(level)
    return levels


def tree_depth(leaf_count: int) -> int:
    """Number of sibling steps from leaf to root under the padding rule."""
    if leaf_count <= 0:
        raise EmptyLeaves("merkle tree needs at least one leaf")
    depth = 0
    n = leaf_count
    while n > 1:
        n = (n + 1) // 2
        depth += 1
    return depth


def merkle_root(leaves: list[bytes]) -> Hash:
    """Root over ``hash_blob(leaf)`` values; single leaf is its own root."""
    return _levels(leaves)[-1][0]


def merkle_prove(leaves: list[bytes], index: int) -> MerkleProof:
    """Inclusion proof for ``leaves[index]`` against ``merkle_root(leaves)``."""
    if not 0 <= index < len(leaves):
        raise IndexOutOfRange(f"leaf index {index} out of range for {len(leaves)} leaves")
    levels = _levels(leaves)
    siblings: list[Hash] = []
    pos = index
    for level in levels[:-1]:
        siblings.append(level[pos ^ 1])
        pos //= 2
    return MerkleProof(leaf_index=index, siblings=tuple(siblings), leaf_count=len(leaves))


def prove_all(leaves: list[bytes]) -> list[MerkleProof]:
    """Proofs for every leaf, sharing one tree construction."""
    levels = _levels(leaves)
    proofs = []
    for index in range(len(leaves)):
        siblings: list[Hash] = []
        pos = index
        for level in levels[:-1]:
            siblings.append(level[pos ^ 1])
            pos //= 2
        proofs.append(MerkleProof(index, tuple(siblings), len(leaves)))
    return proofs


def merkle_verify(root: Hash, leaf: bytes, proof: MerkleProof) -> bool:
    """True iff recomputation from *leaf* through the siblings equals *root*."""
    if proof.leaf_count <= 0 or proof.leaf_index >= proof.leaf_count:
        return False
    if len(proof.siblings) != tree_depth(proof.leaf_count):
        return False
    node = hash_blob(leaf)
    pos = proof.leaf_index
    for sibling in proof.siblings:
        if pos % 2 == 0:
            node = hash_concat(node, sibling)
        else:
            node = hash_concat(sibling, node)
        pos //= 2
    return node == root
