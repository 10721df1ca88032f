"""Parachain runtime: pool gating, authoring/re-execution determinism,
inbound ordering, genesis export, and the off-chain worker boundary."""

import pytest

from freshnet.core import Keypair, canonical_encode
from freshnet.core.extrinsic import Extrinsic, sign_extrinsic
from freshnet.errors import ChannelFull, ChannelNotOpen, NotCollator
from freshnet.ocw import OffchainWorker, simulated_feed
from freshnet.pallets import (
    EventKind,
    RegisterProductArgs,
    RegisterShipmentArgs,
    SensorReading,
    TrackArgs,
    get_shipment,
)
from freshnet.parachain import (
    Parachain,
    RelayUpdate,
    RelayUpdateKind,
    build_genesis_state,
    execute_block,
    export_genesis,
    genesis_header,
    import_genesis,
    process_inbound,
)
from freshnet.xcm import ChannelId, MessageKind, XcmMessage

from conftest import ADMIN, COLLATOR_FARMER, OPERATOR, WORKER, farmer_genesis


def xt_register_product(nonce=0, signer=OPERATOR, product_id="LOT-001"):
    args = canonical_encode(RegisterProductArgs(product_id, "apples"))
    return sign_extrinsic(signer, "products", "register_product", args, nonce)


def open_channel(chain, cid, capacity=8, max_bytes=4096):
    chain.queue_relay_update(
        RelayUpdate(
            kind=RelayUpdateKind.CHANNEL_OPENED,
            channel=cid,
            capacity=capacity,
            max_message_bytes=max_bytes,
        )
    )


def test_pool_accepts_valid_authorized(farmer_chain):
    assert farmer_chain.submit_extrinsic(xt_register_product()).accepted


def test_pool_rejects_unauthorized(farmer_chain):
    intruder = Keypair.from_seed(b"\x99" * 32)
    xt = xt_register_product(signer=intruder)
    status = farmer_chain.submit_extrinsic(xt)
    assert status.reason == "NotAuthorized"


def test_pool_rejects_bad_signature(farmer_chain):
    good = xt_register_product()
    forged = Extrinsic(
        good.signer, good.target_pallet, good.call, good.args, good.nonce, b"\x01" * 64
    )
    assert farmer_chain.submit_extrinsic(forged).reason == "BadSignature"


def test_pool_rejects_stale_nonce(farmer_chain):
    assert farmer_chain.submit_extrinsic(xt_register_product(nonce=0)).accepted
    dup = xt_register_product(nonce=0, product_id="LOT-002")
    assert farmer_chain.submit_extrinsic(dup).reason == "StaleNonce"


def test_empty_pool_block_advances_number(farmer_chain):
    block = farmer_chain.author_parablock()
    assert block.header.number == 1
    assert block.extrinsics == ()
    block2 = farmer_chain.author_parablock()
    assert block2.header.number == 2
    assert block2.header.parent_hash == block.header.hash()


def test_three_extrinsics_included_in_order(farmer_chain):
    for nonce, pid in enumerate(["A", "B", "C"]):
        assert farmer_chain.submit_extrinsic(xt_register_product(nonce, OPERATOR, pid)).accepted
    block = farmer_chain.author_parablock()
    assert [x.nonce for x in block.extrinsics] == [0, 1, 2]
    assert len(block.extrinsics) == 3


def test_self_reexecution_reproduces_roots(farmer_chain):
    farmer_chain.submit_extrinsic(xt_register_product())
    parent_state = farmer_chain.state.copy()
    block = farmer_chain.author_parablock()
    result = execute_block(parent_state, block)
    assert result.ok
    assert result.state.root() == block.header.state_root


def test_tampered_extrinsic_invalidates_block(farmer_chain):
    farmer_chain.submit_extrinsic(xt_register_product())
    parent_state = farmer_chain.state.copy()
    block = farmer_chain.author_parablock()
    tampered = block.extrinsics[0]
    tampered = Extrinsic(
        tampered.signer, tampered.target_pallet, tampered.call,
        tampered.args + b"\x00", tampered.nonce, tampered.signature,
    )
    bad = type(block)(
        header=block.header,
        extrinsics=(tampered,),
        outbound=block.outbound,
        inbound=block.inbound,
        relay_updates=block.relay_updates,
    )
    result = execute_block(parent_state, bad)
    assert result.reason in ("BadIdentity", "RootMismatch")


def test_wrong_state_root_claim_is_invalid(farmer_chain):
    parent_state = farmer_chain.state.copy()
    block = farmer_chain.author_parablock()
    lying_header = type(block.header)(
        para_id=block.header.para_id,
        number=block.header.number,
        parent_hash=block.header.parent_hash,
        state_root=b"\xab" * 32,
        extrinsics_root=block.header.extrinsics_root,
        outbound_root=block.header.outbound_root,
    )
    bad = type(block)(
        header=lying_header,
        extrinsics=block.extrinsics,
        outbound=block.outbound,
        inbound=block.inbound,
        relay_updates=block.relay_updates,
    )
    assert execute_block(parent_state, bad).reason == "RootMismatch"


def test_unauthorized_extrinsic_never_authored(farmer_chain):
    intruder = Keypair.from_seed(b"\x77" * 32)
    farmer_chain.submit_extrinsic(xt_register_product(signer=intruder))
    farmer_chain.submit_extrinsic(xt_register_product())
    block = farmer_chain.author_parablock()
    signers = {x.signer for x in block.extrinsics}
    assert intruder.account not in signers
    assert OPERATOR.account in signers


def test_only_collator_authors(farmer_chain):
    with pytest.raises(NotCollator):
        farmer_chain.author_parablock(signer=ADMIN)


def test_replay_from_genesis_identical_roots(farmer_chain):
    farmer_chain.submit_extrinsic(xt_register_product())
    farmer_chain.author_parablock()
    args = canonical_encode(RegisterShipmentArgs("S1", ("LOT-001",), "processor-pure"))
    farmer_chain.submit_extrinsic(sign_extrinsic(OPERATOR, "shipments", "register_shipment", args, 1))
    farmer_chain.author_parablock()

    replica = Parachain(build_genesis_state(farmer_genesis()), collator=COLLATOR_FARMER)
    for block in farmer_chain.blocks:
        assert replica.import_block(block) is None
    assert replica.state.root() == farmer_chain.state.root()
    assert [h.hash() for h in replica.headers] == [h.hash() for h in farmer_chain.headers]


def test_process_inbound_contiguous_and_gap():
    state = build_genesis_state(farmer_genesis())
    cid = ChannelId(2, 1)

    def msg(seq):
        return XcmMessage(cid, seq, MessageKind.RAW, b"p%d" % seq, 2, seq)

    result = process_inbound(state, [msg(1), msg(2), msg(3)])
    assert [m.seq_no for m in result.applied] == [1, 2, 3]
    assert not result.errors

    gapped = process_inbound(state, [msg(4), msg(6)])
    assert [m.seq_no for m in gapped.applied] == [4]
    assert gapped.errors == {cid: "GapDetected"}

    duplicate = process_inbound(state, [msg(4)])
    assert duplicate.applied == []
    assert duplicate.errors == {cid: "GapDetected"}


def test_send_raw_capacity_and_size(farmer_chain):
    cid = ChannelId(1, 2)
    open_channel(farmer_chain, cid, capacity=8, max_bytes=64)
    for _ in range(8):
        farmer_chain.send_raw(cid, b"ping")
    with pytest.raises(ChannelFull):
        farmer_chain.send_raw(cid, b"ping-9")
    with pytest.raises(ChannelNotOpen):
        farmer_chain.send_raw(ChannelId(1, 9), b"x")


def test_send_raw_message_too_big(farmer_chain):
    from freshnet.errors import MessageTooBig

    cid = ChannelId(1, 2)
    open_channel(farmer_chain, cid, capacity=8, max_bytes=8)
    with pytest.raises(MessageTooBig):
        farmer_chain.send_raw(cid, b"x" * 9)


def test_outbound_sequencing_and_root(farmer_chain):
    cid = ChannelId(1, 2)
    open_channel(farmer_chain, cid, capacity=16, max_bytes=64)
    farmer_chain.send_raw(cid, b"first")
    farmer_chain.send_raw(cid, b"second")
    block = farmer_chain.author_parablock()
    assert [m.seq_no for m in block.outbound] == [1, 2]
    parent = build_genesis_state(farmer_genesis())
    assert execute_block(parent, block).ok
    # capacity frees once the relay reports routing progress
    farmer_chain.queue_relay_update(
        RelayUpdate(kind=RelayUpdateKind.ROUTED, channel=cid, seq_no=2)
    )
    for _ in range(16):
        farmer_chain.send_raw(cid, b"refill")


def test_genesis_export_round_trip():
    state = build_genesis_state(farmer_genesis())
    blob = export_genesis(state)
    assert blob == blob.lower()
    assert len(blob) % 2 == 0
    restored = import_genesis(blob)
    assert restored.root() == state.root()
    # identical config => identical bytes
    assert export_genesis(build_genesis_state(farmer_genesis())) == blob


def test_genesis_header_is_deterministic():
    a = genesis_header(build_genesis_state(farmer_genesis()))
    b = genesis_header(build_genesis_state(farmer_genesis()))
    assert a.hash() == b.hash()


def in_transit_shipment(chain):
    chain.submit_extrinsic(xt_register_product())
    args = canonical_encode(RegisterShipmentArgs("S1", ("LOT-001",), "processor-pure"))
    chain.submit_extrinsic(sign_extrinsic(OPERATOR, "shipments", "register_shipment", args, 1))
    track = canonical_encode(TrackArgs("S1", EventKind.PICKUP, "gate"))
    chain.submit_extrinsic(sign_extrinsic(OPERATOR, "tracking", "track_shipment", track, 2))
    chain.author_parablock()


def test_worker_reading_lands_in_later_block(farmer_chain):
    in_transit_shipment(farmer_chain)
    produced_at = farmer_chain.head.number
    worker = OffchainWorker(WORKER, simulated_feed(seed=7))
    submitted = worker.run(farmer_chain, tick=50)
    assert len(submitted) == 1
    block = farmer_chain.author_parablock()
    assert block.header.number == produced_at + 1
    assert any(x.target_pallet == "sensing" for x in block.extrinsics)
    shipment = get_shipment(farmer_chain.state, "S1")
    assert shipment.events[-1].reading is not None
    assert worker.reports[-1]["submitted"] == 1


def test_worker_crash_never_breaks_imports(farmer_chain):
    in_transit_shipment(farmer_chain)

    def exploding_feed(shipment_id, tick):
        raise RuntimeError("sensor bus offline")

    worker = OffchainWorker(WORKER, exploding_feed)
    submitted = worker.run(farmer_chain, tick=1)
    assert submitted == []
    assert worker.reports[-1]["errors"]
    block = farmer_chain.author_parablock()  # cadence unaffected
    assert block.header.number == 2


def test_worker_never_mutates_state_directly(farmer_chain):
    in_transit_shipment(farmer_chain)
    root_before = farmer_chain.state.root()
    worker = OffchainWorker(WORKER, simulated_feed(seed=3))
    worker.run(farmer_chain, tick=9)
    assert farmer_chain.state.root() == root_before  # only the pool changed


def test_rollback_and_replay(farmer_chain):
    in_transit_shipment(farmer_chain)
    farmer_chain.author_parablock()
    farmer_chain.author_parablock()
    head_at_1 = farmer_chain.headers[1]
    farmer_chain.rollback_to(1)
    assert farmer_chain.head.hash() == head_at_1.hash()
    assert farmer_chain.head.state_root == farmer_chain.state.root()
