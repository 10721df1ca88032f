"""StateStore root commitment properties."""

from hypothesis import given, settings
from hypothesis import strategies as st

from freshnet.core import EMPTY_HASH, StateStore, canonical_decode, canonical_encode, merkle_root
from freshnet.core.state import _entry_leaf

keys = st.binary(min_size=1, max_size=16)
values = st.binary(max_size=24)


def test_empty_root_is_empty_hash():
    assert StateStore().root() == EMPTY_HASH


def test_root_changes_on_set_and_delete():
    store = StateStore()
    r0 = store.root()
    store.set(b"a", b"1")
    r1 = store.root()
    assert r1 != r0
    store.delete(b"a")
    assert store.root() == r0


def test_reinserting_identical_entries_gives_identical_root():
    a = StateStore()
    b = StateStore()
    a.set(b"x", b"1")
    a.set(b"y", b"2")
    b.set(b"y", b"2")
    b.set(b"x", b"1")
    assert a.root() == b.root()


def test_idempotent_set_keeps_root():
    store = StateStore()
    store.set(b"k", b"v")
    r = store.root()
    store.set(b"k", b"v")
    assert store.root() == r


def test_iteration_is_key_lexicographic():
    store = StateStore()
    for k in (b"b", b"a", b"ab", b"a0"):
        store.set(k, b"")
    assert [k for k, _ in store.items()] == sorted([b"b", b"a", b"ab", b"a0"])


def test_prefix_scan():
    store = StateStore()
    for k in (b"p/1", b"p/2", b"q/1"):
        store.set(k, b"v")
    assert store.keys_with_prefix(b"p/") == [b"p/1", b"p/2"]


def test_root_equals_merkle_over_sorted_entry_encodings():
    store = StateStore()
    rows = [(b"k%d" % i, b"v%d" % (i * i)) for i in range(9)]
    for k, v in rows:
        store.set(k, v)
    leaves = [_entry_leaf(k, v) for k, v in sorted(rows)]
    assert store.root() == merkle_root(leaves)


@given(st.dictionaries(keys, values, max_size=12))
@settings(max_examples=60, deadline=None)
def test_root_is_pure_function_of_entry_set(entries):
    a = StateStore()
    for k in sorted(entries):
        a.set(k, entries[k])
    b = StateStore()
    for k in sorted(entries, reverse=True):
        b.set(k, entries[k])
    b.set(b"\x00extra", b"tmp")
    b.delete(b"\x00extra")
    assert a.root() == b.root()


@given(st.dictionaries(keys, values, max_size=10))
@settings(max_examples=40, deadline=None)
def test_snapshot_round_trip(entries):
    store = StateStore()
    for k, v in entries.items():
        store.set(k, v)
    clone = canonical_decode(StateStore, canonical_encode(store))
    assert clone.items() == store.items()
    assert clone.root() == store.root()


def test_copy_is_independent():
    store = StateStore()
    store.set(b"a", b"1")
    clone = store.copy()
    clone.set(b"b", b"2")
    assert store.get(b"b") is None
    assert clone.get(b"a") == b"1"
    assert store.root() != clone.root()
