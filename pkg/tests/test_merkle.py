"""Merkle tree tests against an independent recursive oracle."""

import hashlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freshnet.core import (
    EmptyLeaves,
    IndexOutOfRange,
    MerkleProof,
    merkle_prove,
    merkle_root,
    merkle_verify,
)
from freshnet.core.merkle import prove_all, tree_depth


def oracle_root(leaves):
    """Recursive recomputation of the root, independent of the library:
    hash each leaf, then repeatedly pair up (duplicating an odd tail)."""

    def h(data):
        return hashlib.sha256(data).digest()

    level = [h(leaf) for leaf in leaves]
    if len(level) == 1:
        return level[0]
    if len(level) % 2 == 1:
        level.append(level[-1])
    parents = [h(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    # Recurse on parent digests: wrap them so the leaf-hash step is identity.
    return _oracle_combine(parents)


def _oracle_combine(digests):
    def h(data):
        return hashlib.sha256(data).digest()

    if len(digests) == 1:
        return digests[0]
    if len(digests) % 2 == 1:
        digests = digests + [digests[-1]]
    return _oracle_combine([h(digests[i] + digests[i + 1]) for i in range(0, len(digests), 2)])


def leaves_of(n):
    return [bytes([i]) * (1 + i % 5) for i in range(n)]


def test_single_leaf_root_is_leaf_hash():
    leaf = b"only"
    assert merkle_root([leaf]) == hashlib.sha256(leaf).digest()


def test_two_identical_leaves():
    leaf = b"twin"
    digest = hashlib.sha256(leaf).digest()
    assert merkle_root([leaf, leaf]) == hashlib.sha256(digest + digest).digest()


def test_seven_leaves_match_oracle():
    leaves = leaves_of(7)
    assert merkle_root(leaves) == oracle_root(leaves)


@given(st.integers(min_value=1, max_value=40))
@settings(max_examples=40, deadline=None)
def test_root_matches_oracle_many_sizes(n):
    leaves = leaves_of(n)
    assert merkle_root(leaves) == oracle_root(leaves)


def test_empty_leaves_rejected():
    with pytest.raises(EmptyLeaves):
        merkle_root([])


def test_single_leaf_proof_has_no_siblings():
    proof = merkle_prove([b"x"], 0)
    assert proof.siblings == ()
    assert merkle_verify(merkle_root([b"x"]), b"x", proof)


def test_four_leaves_proof_depth():
    proof = merkle_prove(leaves_of(4), 2)
    assert len(proof.siblings) == 2


def test_index_out_of_range():
    with pytest.raises(IndexOutOfRange):
        merkle_prove(leaves_of(3), 3)


def test_five_leaves_all_indices_verify():
    leaves = leaves_of(5)
    root = merkle_root(leaves)
    for i in range(5):
        assert merkle_verify(root, leaves[i], merkle_prove(leaves, i))


def test_sizes_1_to_64_exhaustive():
    for n in range(1, 65):
        leaves = leaves_of(n)
        root = merkle_root(leaves)
        for i, proof in enumerate(prove_all(leaves)):
            assert merkle_verify(root, leaves[i], proof), (n, i)


def test_tampered_leaf_fails():
    leaves = leaves_of(6)
    root = merkle_root(leaves)
    proof = merkle_prove(leaves, 3)
    bad = bytes([leaves[3][0] ^ 1]) + leaves[3][1:]
    assert not merkle_verify(root, bad, proof)


def test_swapped_siblings_fail():
    rng = random.Random(7)
    for n in (4, 5, 8, 13):
        leaves = leaves_of(n)
        root = merkle_root(leaves)
        for _ in range(10):
            i = rng.randrange(n)
            proof = merkle_prove(leaves, i)
            if len(proof.siblings) < 2:
                continue
            swapped = list(proof.siblings)
            a, b = rng.sample(range(len(swapped)), 2)
            if swapped[a] == swapped[b]:
                continue
            swapped[a], swapped[b] = swapped[b], swapped[a]
            mutated = MerkleProof(proof.leaf_index, tuple(swapped), proof.leaf_count)
            assert not merkle_verify(root, leaves[i], mutated)


def test_single_bit_mutations_fail():
    rng = random.Random(13)
    leaves = leaves_of(9)
    root = merkle_root(leaves)
    for _ in range(50):
        i = rng.randrange(len(leaves))
        proof = merkle_prove(leaves, i)
        choice = rng.randrange(3)
        if choice == 0:
            pos = rng.randrange(len(leaves[i]) * 8)
            leaf = bytearray(leaves[i])
            leaf[pos // 8] ^= 1 << (pos % 8)
            assert not merkle_verify(root, bytes(leaf), proof)
        elif choice == 1 and proof.siblings:
            which = rng.randrange(len(proof.siblings))
            sib = bytearray(proof.siblings[which])
            pos = rng.randrange(256)
            sib[pos // 8] ^= 1 << (pos % 8)
            siblings = list(proof.siblings)
            siblings[which] = bytes(sib)
            mutated = MerkleProof(proof.leaf_index, tuple(siblings), proof.leaf_count)
            assert not merkle_verify(root, leaves[i], mutated)
        else:
            bad_root = bytearray(root)
            pos = rng.randrange(256)
            bad_root[pos // 8] ^= 1 << (pos % 8)
            assert not merkle_verify(bytes(bad_root), leaves[i], proof)


def test_extended_or_truncated_proof_fails():
    leaves = leaves_of(8)
    root = merkle_root(leaves)
    proof = merkle_prove(leaves, 1)
    longer = MerkleProof(1, proof.siblings + (proof.siblings[0],), 8)
    shorter = MerkleProof(1, proof.siblings[:-1], 8)
    assert not merkle_verify(root, leaves[1], longer)
    assert not merkle_verify(root, leaves[1], shorter)


def test_tree_depth_matches_proof_length():
    for n in range(1, 33):
        assert len(merkle_prove(leaves_of(n), 0).siblings) == tree_depth(n)
