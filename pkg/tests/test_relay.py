"""Relay runtime: capacity rule, scheduling rotation (vs a closed-form
oracle), inclusion thresholds, finality votes, disputes, and routing
fairness."""

import math

import pytest

from freshnet.core import Keypair
from freshnet.errors import CapacityExceeded, NoValidators, OrgAlreadyRegistered, UnknownOrg
from freshnet.parachain import VALIDATION_CODE_HASH, build_genesis_state, genesis_header
from freshnet.relay import (
    FinalityTracker,
    RelayGenesis,
    RelayState,
    RoutingQueues,
    SharedConfig,
    bitmap_from_indices,
    bitmap_indices,
    build_ready_messages,
    make_vote,
    schedule,
    supermajority,
)
from freshnet.xcm import ChannelId, MessageKind, StorageMode, XcmMessage

from conftest import COLLATOR_FARMER, farmer_genesis, processor_genesis

VALIDATOR_KEYS = [Keypair.from_seed(bytes([40 + i]) * 32) for i in range(6)]


def relay_state(validators=2, mode=StorageMode.HRMP) -> RelayState:
    genesis = RelayGenesis(
        validators=tuple(k.account for k in VALIDATOR_KEYS[:validators]),
        config=SharedConfig(mode=mode),
    )
    return RelayState(genesis)


def register(state, spec):
    head = genesis_header(build_genesis_state(spec))
    return state.register_parachain(spec.org_id, head, VALIDATION_CODE_HASH, spec.collator)


def test_capacity_two_validators_one_para():
    state = relay_state(validators=2)
    assert register(state, farmer_genesis()) == 1
    with pytest.raises(CapacityExceeded):
        register(state, processor_genesis())


def test_capacity_three_validators_two_paras():
    state = relay_state(validators=3)
    register(state, farmer_genesis())
    register(state, processor_genesis())
    with pytest.raises(OrgAlreadyRegistered):
        register(state, farmer_genesis())


def test_deregister_non_destructive():
    state = relay_state(validators=3)
    para = register(state, farmer_genesis())
    state.deregister_parachain("farmer-fresh")
    assert not state.is_registered(para)
    assert para in state.registry.retained
    assert state.paras[para].head is not None  # chain record intact
    with pytest.raises(UnknownOrg):
        state.deregister_parachain("farmer-fresh")
    # re-registration allocates a fresh ParaId; the old one is never reused
    fresh = register(state, farmer_genesis())
    assert fresh != para
    assert para in state.registry.retained


def test_supermajority_values():
    assert [supermajority(n) for n in (1, 2, 3, 4, 5, 6, 7)] == [1, 2, 2, 3, 4, 4, 5]


def oracle_schedule(validator_count, paras, number):
    """Closed-form restatement: para at sorted position i gets the window
    of ceil(2v/3) consecutive indices starting at (number + i) mod v."""
    window = min(validator_count, max(1, math.ceil(2 * validator_count / 3)))
    out = {}
    for i, para in enumerate(sorted(paras)):
        start = (number + i) % validator_count
        out[para] = tuple(sorted((start + k) % validator_count for k in range(window)))
    return out


def test_schedule_deterministic_and_matches_oracle():
    for v in range(2, 6):
        for para_count in range(1, v):
            paras = list(range(1, para_count + 1))
            for number in range(8):
                a = schedule(v, paras, number)
                b = schedule(v, paras, number)
                assert a == b
                assert a == oracle_schedule(v, paras, number)
                for para, subset in a.items():
                    assert len(subset) >= 1
                    assert len(set(subset)) == len(subset)


def test_schedule_rotates_between_blocks():
    for v in range(3, 6):
        for para_count in range(1, v):
            paras = list(range(1, para_count + 1))
            assert schedule(v, paras, 5) != schedule(v, paras, 6)


def test_schedule_subset_reaches_inclusion_threshold():
    for v in range(2, 7):
        assignment = schedule(v, [1], 0)
        assert len(assignment[1]) >= supermajority(v)


def test_schedule_one_para_two_validators_assigns_both():
    assignment = schedule(2, [7], 3)
    assert assignment[7] == (0, 1)


def test_schedule_requires_validators():
    with pytest.raises(NoValidators):
        schedule(0, [1], 0)


def test_bitmap_round_trip():
    for indices in (set(), {0}, {1, 3}, {0, 1, 2, 3, 9}):
        bitmap = bitmap_from_indices(indices, 10)
        assert bitmap_indices(bitmap) == indices


def make_chain_blocks(tracker, count, fork_at=None):
    """Build a linear chain of pseudo relay blocks in the tracker."""
    hashes = []
    parent = b"\x00" * 32
    for n in range(1, count + 1):
        block_hash = bytes([n]) * 32
        tracker.add_block(block_hash, n, parent)
        hashes.append(block_hash)
        parent = block_hash
    return hashes


def test_finality_threshold_and_ancestor_implication():
    keys = VALIDATOR_KEYS[:4]
    tracker = FinalityTracker(4, tuple(k.account for k in keys))
    hashes = make_chain_blocks(tracker, 3)
    # 3 of 4 validators vote for block 3: blocks 1..3 all finalize
    for k in keys[:2]:
        assert tracker.add_vote(make_vote(k, hashes[2], 3)) == []
    newly = tracker.add_vote(make_vote(keys[2], hashes[2], 3))
    assert newly == hashes  # lowest first
    assert tracker.finalized_head == (3, hashes[2])


def test_finality_two_votes_insufficient():
    keys = VALIDATOR_KEYS[:4]
    tracker = FinalityTracker(4, tuple(k.account for k in keys))
    hashes = make_chain_blocks(tracker, 1)
    tracker.add_vote(make_vote(keys[0], hashes[0], 1))
    tracker.add_vote(make_vote(keys[1], hashes[0], 1))
    assert not tracker.is_finalized(hashes[0])


def test_equivocation_discards_both_votes():
    keys = VALIDATOR_KEYS[:4]
    tracker = FinalityTracker(4, tuple(k.account for k in keys))
    parent = b"\x00" * 32
    x, y = b"\xaa" * 32, b"\xbb" * 32
    tracker.add_block(x, 1, parent)
    tracker.add_block(y, 1, parent)
    eq = keys[3]
    tracker.add_vote(make_vote(eq, x, 1))
    assert tracker.supporters(x) == {3}
    tracker.add_vote(make_vote(eq, y, 1))  # conflicting vote at height 1
    assert tracker.supporters(x) == set()
    assert tracker.supporters(y) == set()
    assert 3 in tracker.equivocators
    # further votes at the voided height are ignored
    tracker.add_vote(make_vote(eq, x, 1))
    assert tracker.supporters(x) == set()
    # two honest votes + nothing: neither block finalizes
    tracker.add_vote(make_vote(keys[0], x, 1))
    tracker.add_vote(make_vote(keys[1], y, 1))
    assert not tracker.is_finalized(x) and not tracker.is_finalized(y)
    assert tracker.conflicting_finalized_pair() is None


def test_vote_for_wrong_height_ignored():
    keys = VALIDATOR_KEYS[:4]
    tracker = FinalityTracker(4, tuple(k.account for k in keys))
    hashes = make_chain_blocks(tracker, 2)
    tracker.add_vote(make_vote(keys[0], hashes[1], 7))  # wrong number
    assert tracker.supporters(hashes[1]) == set()


def ready(cid, seq):
    message = XcmMessage(cid, seq, MessageKind.RAW, b"payload-%d" % seq, cid.sender, 1)
    header_outbound = [message]
    from freshnet.parachain import ParaHeader
    from freshnet.core.merkle import merkle_root

    header = ParaHeader(
        para_id=cid.sender,
        number=1,
        parent_hash=b"\x00" * 32,
        state_root=b"\x00" * 32,
        extrinsics_root=b"\x00" * 32,
        outbound_root=merkle_root([message.leaf_bytes()]),
    )
    return build_ready_messages(StorageMode.HRMP, header, header_outbound)[0]


def test_routing_fairness_round_robin():
    queues = RoutingQueues()
    a, b = ChannelId(1, 2), ChannelId(3, 2)
    for seq in range(1, 11):
        queues.enqueue(ready(a, seq))
        queues.enqueue(ready(b, seq))
    entries = queues.drain_round_robin(10)
    assert len(entries) == 10
    counts = {a: 0, b: 0}
    for entry in entries:
        counts[entry.channel] += 1
    assert counts == {a: 5, b: 5}


def test_routing_share_differs_by_at_most_one():
    queues = RoutingQueues()
    a, b, c = ChannelId(1, 2), ChannelId(3, 2), ChannelId(1, 3)
    for seq in range(1, 8):
        queues.enqueue(ready(a, seq))
    for seq in range(1, 8):
        queues.enqueue(ready(b, seq))
    for seq in range(1, 8):
        queues.enqueue(ready(c, seq))
    entries = queues.drain_round_robin(7)
    counts = {}
    for entry in entries:
        counts[entry.channel] = counts.get(entry.channel, 0) + 1
    assert max(counts.values()) - min(counts.values()) <= 1


def test_routing_preserves_per_channel_order():
    queues = RoutingQueues()
    a, b = ChannelId(1, 2), ChannelId(3, 2)
    for seq in range(1, 6):
        queues.enqueue(ready(a, seq))
        queues.enqueue(ready(b, seq))
    seen = {a: 0, b: 0}
    while True:
        batch = queues.drain_round_robin(3)
        if not batch:
            break
        for entry in batch:
            assert entry.seq_no == seen[entry.channel] + 1
            seen[entry.channel] = entry.seq_no
    assert seen == {a: 5, b: 5}


def test_build_ready_messages_modes():
    cid = ChannelId(1, 2)
    messages = [
        XcmMessage(cid, seq, MessageKind.RAW, b"distinctive-payload-%d" % seq, 1, 1)
        for seq in (1, 2, 3)
    ]
    from freshnet.core.merkle import merkle_root, merkle_verify
    from freshnet.parachain import ParaHeader

    root = merkle_root([m.leaf_bytes() for m in messages])
    header = ParaHeader(1, 1, b"\x00" * 32, b"\x00" * 32, b"\x00" * 32, root)
    hrmp = build_ready_messages(StorageMode.HRMP, header, messages)
    xcmp = build_ready_messages(StorageMode.XCMP, header, messages)
    for i, message in enumerate(messages):
        assert hrmp[i].entry.payload == message.leaf_bytes()
        assert message.payload in hrmp[i].entry.payload
        assert xcmp[i].entry.payload == b""
        assert len(xcmp[i].entry.payload_ref) == 32
        assert merkle_verify(root, message.leaf_bytes(), xcmp[i].entry.proof)
