"""Supply pallets: registration, the tracking state machine (checked
against a brute-force oracle), sensor readings, and handoff payloads."""

import itertools

import pytest

from freshnet.core import Keypair, StateStore, canonical_decode, canonical_encode
from freshnet.errors import (
    ChannelNotOpen,
    DuplicateProduct,
    DuplicateShipment,
    IllegalTransition,
    InvalidReading,
    NotAuthorized,
    UnknownProduct,
    UnknownShipment,
)
from freshnet.pallets import (
    CallContext,
    EventKind,
    HandoffArgs,
    RegisterProductArgs,
    RegisterShipmentArgs,
    SensorReading,
    Shipment,
    ShipmentHandoffPayload,
    ShipmentStatus,
    SubmitReadingArgs,
    TrackArgs,
    apply_handoff,
    get_shipment,
    handoff_shipment,
    register_product,
    register_shipment,
    submit_reading,
    trace_local,
    track_shipment,
)
from freshnet.rbac import Permission, Role, RoleRegistry
from freshnet.xcm import ChannelId, MessageKind

FARMER = Keypair.from_seed(b"\x05" * 32)
WORKER = Keypair.from_seed(b"\x06" * 32)


def make_ctx(block_number=1, org="farmer-fresh", para=1):
    state = StateStore()
    registry = RoleRegistry(state)
    registry.seed_admin(FARMER.account)
    emitted = []

    def emit(cid, kind, payload):
        emitted.append((cid, kind, payload))
        return len(emitted)

    ctx = CallContext(
        state=state,
        registry=registry,
        org_id=org,
        para_id=para,
        block_number=block_number,
        emit_message=emit,
    )
    return ctx, emitted


def seed_shipment(ctx, shipment_id="SHIP-1", dest="processor-pure"):
    register_product(ctx, FARMER.account, RegisterProductArgs("LOT-001", "apples"))
    return register_shipment(
        ctx, FARMER.account, RegisterShipmentArgs(shipment_id, ("LOT-001",), dest)
    )


def test_register_product_and_duplicate():
    ctx, _ = make_ctx()
    product = register_product(
        ctx, FARMER.account, RegisterProductArgs("LOT-001", "apples", (("variety", "gala"),))
    )
    assert product.owner_org == "farmer-fresh"
    assert product.registered_at == 1
    with pytest.raises(DuplicateProduct):
        register_product(ctx, FARMER.account, RegisterProductArgs("LOT-001", "apples"))


def test_register_shipment_requires_known_products():
    ctx, _ = make_ctx()
    with pytest.raises(UnknownProduct):
        register_shipment(
            ctx, FARMER.account, RegisterShipmentArgs("S1", ("LOT-404",), "processor-pure")
        )


def test_register_shipment_pending_no_events():
    ctx, _ = make_ctx()
    shipment = seed_shipment(ctx)
    assert shipment.status == ShipmentStatus.PENDING
    assert shipment.events == ()
    with pytest.raises(DuplicateShipment):
        register_shipment(
            ctx, FARMER.account, RegisterShipmentArgs("SHIP-1", ("LOT-001",), "x")
        )


def test_pickup_advances_to_in_transit():
    ctx, _ = make_ctx()
    seed_shipment(ctx)
    updated = track_shipment(
        ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.PICKUP, "farm gate")
    )
    assert updated.status == ShipmentStatus.IN_TRANSIT
    assert len(updated.events) == 1


def test_deliver_from_pending_is_illegal():
    ctx, _ = make_ctx()
    seed_shipment(ctx)
    with pytest.raises(IllegalTransition):
        track_shipment(ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.DELIVER, "x"))


def test_full_journey_event_order():
    ctx, _ = make_ctx()
    seed_shipment(ctx)
    kinds = [EventKind.PICKUP, EventKind.SCAN, EventKind.SCAN, EventKind.SCAN, EventKind.DELIVER]
    for i, kind in enumerate(kinds):
        ctx.block_number = i + 1
        track_shipment(ctx, FARMER.account, TrackArgs("SHIP-1", kind, f"stop-{i}"))
    status, events = trace_local(ctx.state, "SHIP-1")
    assert status == ShipmentStatus.DELIVERED
    assert [e.kind for e in events] == kinds
    assert [e.block_number for e in events] == [1, 2, 3, 4, 5]


def oracle_legal(sequence):
    """Brute-force acceptance of an event-kind string by the intended
    machine: Pickup Scan* Deliver?, evaluated step by step."""
    status = "pending"
    for kind in sequence:
        if status == "pending" and kind == EventKind.PICKUP:
            status = "in_transit"
        elif status == "in_transit" and kind == EventKind.SCAN:
            pass
        elif status == "in_transit" and kind == EventKind.DELIVER:
            status = "delivered"
        else:
            return False
    return True


def test_state_machine_matches_oracle_for_all_strings_up_to_5():
    for length in range(0, 6):
        for sequence in itertools.product(list(EventKind), repeat=length):
            ctx, _ = make_ctx()
            seed_shipment(ctx)
            accepted = True
            for kind in sequence:
                try:
                    track_shipment(ctx, FARMER.account, TrackArgs("SHIP-1", kind, "loc"))
                except IllegalTransition:
                    accepted = False
                    break
            assert accepted == oracle_legal(sequence), sequence


def test_unknown_shipment():
    ctx, _ = make_ctx()
    with pytest.raises(UnknownShipment):
        track_shipment(ctx, FARMER.account, TrackArgs("NOPE", EventKind.PICKUP, "x"))
    with pytest.raises(UnknownShipment):
        trace_local(ctx.state, "NOPE")


def test_submit_reading_appends_scan_with_payload():
    ctx, _ = make_ctx()
    ctx.registry.seed_grant(WORKER.account, Role("sensing", Permission.EXECUTE))
    ctx.registry.seed_grant(WORKER.account, Role("tracking", Permission.EXECUTE))
    seed_shipment(ctx)
    track_shipment(ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.PICKUP, "gate"))
    reading = SensorReading(temperature_centi_celsius=450, humidity_permille=620, captured_at=99)
    updated = submit_reading(
        ctx, WORKER.account, SubmitReadingArgs("SHIP-1", reading, "truck-7")
    )
    assert updated.events[-1].kind == EventKind.SCAN
    assert updated.events[-1].reading == reading
    assert ctx.state.get(b"sensing/latest/SHIP-1") == canonical_encode(reading)


def test_submit_reading_requires_tracking_execute():
    ctx, _ = make_ctx()
    ctx.registry.seed_grant(WORKER.account, Role("sensing", Permission.EXECUTE))
    seed_shipment(ctx)
    track_shipment(ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.PICKUP, "gate"))
    reading = SensorReading(0, 0, 0)
    with pytest.raises(NotAuthorized):
        submit_reading(ctx, WORKER.account, SubmitReadingArgs("SHIP-1", reading, "t"))


def test_submit_reading_rejects_delivered_and_bad_humidity():
    ctx, _ = make_ctx()
    ctx.registry.seed_grant(WORKER.account, Role("sensing", Permission.EXECUTE))
    ctx.registry.seed_grant(WORKER.account, Role("tracking", Permission.EXECUTE))
    seed_shipment(ctx)
    track_shipment(ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.PICKUP, "gate"))
    with pytest.raises(InvalidReading):
        submit_reading(
            ctx, WORKER.account, SubmitReadingArgs("SHIP-1", SensorReading(0, 1001, 0), "t")
        )
    track_shipment(ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.DELIVER, "dock"))
    with pytest.raises(IllegalTransition):
        submit_reading(
            ctx, WORKER.account, SubmitReadingArgs("SHIP-1", SensorReading(0, 0, 0), "t")
        )


def test_handoff_requires_in_transit_and_registered_dest():
    ctx, emitted = make_ctx()
    seed_shipment(ctx)
    with pytest.raises(IllegalTransition):
        handoff_shipment(ctx, FARMER.account, HandoffArgs("SHIP-1"), b"\x00" * 32)
    track_shipment(ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.PICKUP, "gate"))
    # destination org not present in the relay directory mirror
    with pytest.raises(ChannelNotOpen):
        handoff_shipment(ctx, FARMER.account, HandoffArgs("SHIP-1"), b"\x00" * 32)
    assert emitted == []


def test_handoff_emits_message_and_marks_shipment():
    ctx, emitted = make_ctx(para=1)
    seed_shipment(ctx)
    track_shipment(ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.PICKUP, "gate"))
    ctx.state.set(b"xcm/orgdir/processor-pure", (2).to_bytes(8, "little"))
    head = b"\x07" * 32
    handoff_shipment(ctx, FARMER.account, HandoffArgs("SHIP-1"), head)
    assert len(emitted) == 1
    cid, kind, payload = emitted[0]
    assert cid == ChannelId(1, 2)
    assert kind == MessageKind.SHIPMENT_HANDOFF
    record = canonical_decode(ShipmentHandoffPayload, payload)
    assert record.shipment.shipment_id == "SHIP-1"
    assert record.origin_head == head
    assert get_shipment(ctx.state, "SHIP-1").handed_off
    with pytest.raises(IllegalTransition):
        handoff_shipment(ctx, FARMER.account, HandoffArgs("SHIP-1"), head)


def test_apply_handoff_attaches_provenance_and_continues():
    sender_ctx, emitted = make_ctx(para=1)
    seed_shipment(sender_ctx)
    track_shipment(sender_ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.PICKUP, "gate"))
    track_shipment(sender_ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.SCAN, "hwy"))
    sender_ctx.state.set(b"xcm/orgdir/processor-pure", (2).to_bytes(8, "little"))
    handoff_shipment(sender_ctx, FARMER.account, HandoffArgs("SHIP-1"), b"\x01" * 32)
    _, _, payload = emitted[0]

    recv_ctx, _ = make_ctx(org="processor-pure", para=2)
    shipment = apply_handoff(recv_ctx, payload)
    assert shipment.status == ShipmentStatus.IN_TRANSIT
    assert shipment.events == ()
    assert shipment.provenance is not None
    assert [e.kind for e in shipment.provenance.origin_events] == [
        EventKind.PICKUP,
        EventKind.SCAN,
    ]
    assert shipment.provenance.origin_org == "farmer-fresh"
    # receiver continues the state machine
    track_shipment(recv_ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.DELIVER, "plant"))
    status, events = trace_local(recv_ctx.state, "SHIP-1")
    assert status == ShipmentStatus.DELIVERED
    assert [e.kind for e in events] == [EventKind.DELIVER]


def test_shipment_codec_round_trip():
    ctx, _ = make_ctx()
    seed_shipment(ctx)
    track_shipment(ctx, FARMER.account, TrackArgs("SHIP-1", EventKind.PICKUP, "gate"))
    shipment = get_shipment(ctx.state, "SHIP-1")
    assert canonical_decode(Shipment, canonical_encode(shipment)) == shipment
