"""Hashing pins: determinism, distinctness, and published SHA-256 vectors."""

from pathlib import Path

from freshnet.core import EMPTY_HASH, hash_blob

VECTOR_FILE = Path(__file__).parent / "vectors" / "hash_vectors.txt"


def test_determinism():
    for data in (b"", b"\x00", b"abc", bytes(range(256))):
        assert hash_blob(data) == hash_blob(data)
        assert len(hash_blob(data)) == 32


def test_distinct_inputs():
    assert hash_blob(b"") != hash_blob(b"\x00")


def test_empty_hash_constant():
    assert hash_blob(b"") == EMPTY_HASH


def test_published_vectors():
    """Each line: <input-hex> <digest-hex>; digests from the published
    SHA-256 test vectors, not computed by this codebase."""
    lines = [
        line.split()
        for line in VECTOR_FILE.read_text().splitlines()
        if line and not line.startswith("#")
    ]
    assert len(lines) >= 3
    for input_hex, digest_hex in lines:
        data = bytes.fromhex(input_hex) if input_hex != "-" else b""
        assert hash_blob(data).hex() == digest_hex
