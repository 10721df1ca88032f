"""Business-logic pallets: products, shipments, tracking, sensing.

Together with the rbac pallet these form the five dispatchable runtime
modules of every organization chain.  All calls execute inside the
parachain's single-threaded state-transition function against the
``StateStore``; queries are read-only.

Shipment lifecycle: Pending --Pickup--> InTransit --Deliver--> Delivered,
with Scan events (optionally carrying a sensor reading) only while
InTransit.  A shipment bound for another organization is handed off over
an open cross-chain channel; the receiving chain instantiates it with the
full origin event history attached as provenance and continues the state
machine from InTransit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

from freshnet.core import AccountId, StateStore
from freshnet.core.codec import Reader, Writer, canonical_decode, canonical_encode
from freshnet.core.hashing import DIGEST_SIZE, Hash
from freshnet.errors import (
    ChainError,
    ChannelNotOpen,
    DuplicateProduct,
    DuplicateShipment,
    IllegalTransition,
    InvalidReading,
    NotAuthorized,
    UnknownCall,
    UnknownProduct,
    UnknownShipment,
)
from freshnet.rbac import Permission, RoleChangeArgs, RoleRegistry
from freshnet.xcm import ChannelId, MessageKind


class ShipmentStatus(enum.IntEnum):
    PENDING = 0
    IN_TRANSIT = 1
    DELIVERED = 2


class EventKind(enum.IntEnum):
    PICKUP = 0
    SCAN = 1
    DELIVER = 2


#: Legal event kinds per current status; Pickup and Deliver advance it.
_LEGAL = {
    ShipmentStatus.PENDING: {EventKind.PICKUP},
    ShipmentStatus.IN_TRANSIT: {EventKind.SCAN, EventKind.DELIVER},
    ShipmentStatus.DELIVERED: set(),
}
_ADVANCES = {EventKind.PICKUP: ShipmentStatus.IN_TRANSIT, EventKind.DELIVER: ShipmentStatus.DELIVERED}


@dataclass(frozen=True)
class SensorReading:
    temperature_centi_celsius: int
    humidity_permille: int
    captured_at: int

    def encode_into(self, w: Writer) -> None:
        w.i32(self.temperature_centi_celsius)
        w.u32(self.humidity_permille)
        w.u64(self.captured_at)

    @classmethod
    def decode_from(cls, r: Reader) -> "SensorReading":
        return cls(r.i32(), r.u32(), r.u64())


@dataclass(frozen=True)
class TrackingEvent:
    kind: EventKind
    block_number: int
    location: str
    reading: SensorReading | None = None

    def encode_into(self, w: Writer) -> None:
        w.u8(int(self.kind))
        w.u64(self.block_number)
        w.text(self.location)
        w.option(self.reading, lambda w_, v: v.encode_into(w_))

    @classmethod
    def decode_from(cls, r: Reader) -> "TrackingEvent":
        return cls(
            kind=EventKind(r.u8()),
            block_number=r.u64(),
            location=r.text(),
            reading=r.option(SensorReading.decode_from),
        )


@dataclass(frozen=True)
class Product:
    product_id: str
    owner_org: str
    label: str
    attributes: tuple[tuple[str, str], ...]
    registered_at: int

    def encode_into(self, w: Writer) -> None:
        w.text(self.product_id)
        w.text(self.owner_org)
        w.text(self.label)
        w.u32(len(self.attributes))
        for key, value in self.attributes:
            w.text(key)
            w.text(value)
        w.u64(self.registered_at)

    @classmethod
    def decode_from(cls, r: Reader) -> "Product":
        product_id = r.text()
        owner_org = r.text()
        label = r.text()
        attributes = tuple((r.text(), r.text()) for _ in range(r.u32()))
        return cls(product_id, owner_org, label, attributes, r.u64())


@dataclass(frozen=True)
class Provenance:
    """Origin-chain history attached to a shipment created by handoff."""

    origin_para: int
    origin_org: str
    origin_head: Hash
    origin_events: tuple[TrackingEvent, ...]
    origin_status: ShipmentStatus

    def encode_into(self, w: Writer) -> None:
        w.u64(self.origin_para)
        w.text(self.origin_org)
        w.fixed(self.origin_head, DIGEST_SIZE)
        w.seq(list(self.origin_events), lambda w_, e: e.encode_into(w_))
        w.u8(int(self.origin_status))

    @classmethod
    def decode_from(cls, r: Reader) -> "Provenance":
        return cls(
            origin_para=r.u64(),
            origin_org=r.text(),
            origin_head=r.fixed(DIGEST_SIZE),
            origin_events=tuple(r.seq(TrackingEvent.decode_from)),
            origin_status=ShipmentStatus(r.u8()),
        )


@dataclass(frozen=True)
class Shipment:
    shipment_id: str
    product_ids: tuple[str, ...]
    origin_org: str
    dest_org: str
    status: ShipmentStatus
    events: tuple[TrackingEvent, ...]
    provenance: Provenance | None = None
    handed_off: bool = False

    def encode_into(self, w: Writer) -> None:
        w.text(self.shipment_id)
        w.seq(list(self.product_ids), lambda w_, p: w_.text(p))
        w.text(self.origin_org)
        w.text(self.dest_org)
        w.u8(int(self.status))
        w.seq(list(self.events), lambda w_, e: e.encode_into(w_))
        w.option(self.provenance, lambda w_, v: v.encode_into(w_))
        w.boolean(self.handed_off)

    @classmethod
    def decode_from(cls, r: Reader) -> "Shipment":
        return cls(
            shipment_id=r.text(),
            product_ids=tuple(r.seq(lambda r_: r_.text())),
            origin_org=r.text(),
            dest_org=r.text(),
            status=ShipmentStatus(r.u8()),
            events=tuple(r.seq(TrackingEvent.decode_from)),
            provenance=r.option(Provenance.decode_from),
            handed_off=r.boolean(),
        )


# -- call argument records -------------------------------------------------


@dataclass(frozen=True)
class RegisterProductArgs:
    product_id: str
    label: str
    attributes: tuple[tuple[str, str], ...] = ()

    def encode_into(self, w: Writer) -> None:
        w.text(self.product_id)
        w.text(self.label)
        w.u32(len(self.attributes))
        for key, value in self.attributes:
            w.text(key)
            w.text(value)

    @classmethod
    def decode_from(cls, r: Reader) -> "RegisterProductArgs":
        product_id = r.text()
        label = r.text()
        attributes = tuple((r.text(), r.text()) for _ in range(r.u32()))
        return cls(product_id, label, attributes)


@dataclass(frozen=True)
class RegisterShipmentArgs:
    shipment_id: str
    product_ids: tuple[str, ...]
    dest_org: str

    def encode_into(self, w: Writer) -> None:
        w.text(self.shipment_id)
        w.seq(list(self.product_ids), lambda w_, p: w_.text(p))
        w.text(self.dest_org)

    @classmethod
    def decode_from(cls, r: Reader) -> "RegisterShipmentArgs":
        return cls(r.text(), tuple(r.seq(lambda r_: r_.text())), r.text())


@dataclass(frozen=True)
class TrackArgs:
    shipment_id: str
    kind: EventKind
    location: str

    def encode_into(self, w: Writer) -> None:
        w.text(self.shipment_id)
        w.u8(int(self.kind))
        w.text(self.location)

    @classmethod
    def decode_from(cls, r: Reader) -> "TrackArgs":
        return cls(r.text(), EventKind(r.u8()), r.text())


@dataclass(frozen=True)
class SubmitReadingArgs:
    shipment_id: str
    reading: SensorReading
    location: str

    def encode_into(self, w: Writer) -> None:
        w.text(self.shipment_id)
        self.reading.encode_into(w)
        w.text(self.location)

    @classmethod
    def decode_from(cls, r: Reader) -> "SubmitReadingArgs":
        return cls(r.text(), SensorReading.decode_from(r), r.text())


@dataclass(frozen=True)
class HandoffArgs:
    shipment_id: str

    def encode_into(self, w: Writer) -> None:
        w.text(self.shipment_id)

    @classmethod
    def decode_from(cls, r: Reader) -> "HandoffArgs":
        return cls(r.text())


@dataclass(frozen=True)
class ShipmentHandoffPayload:
    """Cross-chain payload: the full shipment record plus origin linkage."""

    shipment: Shipment
    origin_org: str
    origin_para: int
    origin_head: Hash

    def encode_into(self, w: Writer) -> None:
        self.shipment.encode_into(w)
        w.text(self.origin_org)
        w.u64(self.origin_para)
        w.fixed(self.origin_head, DIGEST_SIZE)

    @classmethod
    def decode_from(cls, r: Reader) -> "ShipmentHandoffPayload":
        return cls(Shipment.decode_from(r), r.text(), r.u64(), r.fixed(DIGEST_SIZE))


# -- state access ------------------------------------------------------------


def _product_key(product_id: str) -> bytes:
    return b"products/product/" + product_id.encode()


def _shipment_key(shipment_id: str) -> bytes:
    return b"shipments/shipment/" + shipment_id.encode()


def get_product(state: StateStore, product_id: str) -> Product | None:
    raw = state.get(_product_key(product_id))
    return canonical_decode(Product, raw) if raw is not None else None


def get_shipment(state: StateStore, shipment_id: str) -> Shipment | None:
    raw = state.get(_shipment_key(shipment_id))
    return canonical_decode(Shipment, raw) if raw is not None else None


def put_shipment(state: StateStore, shipment: Shipment) -> None:
    state.set(_shipment_key(shipment.shipment_id), canonical_encode(shipment))


def list_products(state: StateStore) -> list[Product]:
    return [
        canonical_decode(Product, state.get(k))
        for k in state.keys_with_prefix(b"products/product/")
    ]


def list_shipments(state: StateStore) -> list[Shipment]:
    return [
        canonical_decode(Shipment, state.get(k))
        for k in state.keys_with_prefix(b"shipments/shipment/")
    ]


def trace_local(state: StateStore, shipment_id: str) -> tuple[ShipmentStatus, list[TrackingEvent]]:
    """Current status plus the chain-local event history in append order."""
    shipment = get_shipment(state, shipment_id)
    if shipment is None:
        raise UnknownShipment(shipment_id)
    return shipment.status, list(shipment.events)


# -- execution context -------------------------------------------------------


@dataclass
class CallContext:
    """Everything a pallet call may touch during execution."""

    state: StateStore
    registry: RoleRegistry
    org_id: str
    para_id: int
    block_number: int
    # Emits an outbound cross-chain message; wired by the runtime to the
    # block-under-construction.  (channel, kind, payload) -> assigned seq.
    emit_message: Callable[[ChannelId, MessageKind, bytes], int] = field(
        default=lambda cid, kind, payload: 0
    )


def _append_event(shipment: Shipment, event: TrackingEvent) -> Shipment:
    if shipment.handed_off:
        raise IllegalTransition(f"{shipment.shipment_id} was handed off")
    if event.kind not in _LEGAL[shipment.status]:
        raise IllegalTransition(
            f"{event.kind.name} not legal while {shipment.status.name}"
        )
    status = _ADVANCES.get(event.kind, shipment.status)
    return replace(shipment, status=status, events=shipment.events + (event,))


def register_product(ctx: CallContext, caller: AccountId, args: RegisterProductArgs) -> Product:
    key = _product_key(args.product_id)
    if ctx.state.contains(key):
        raise DuplicateProduct(args.product_id)
    product = Product(
        product_id=args.product_id,
        owner_org=ctx.org_id,
        label=args.label,
        attributes=args.attributes,
        registered_at=ctx.block_number,
    )
    ctx.state.set(key, canonical_encode(product))
    return product


def register_shipment(ctx: CallContext, caller: AccountId, args: RegisterShipmentArgs) -> Shipment:
    if not args.product_ids:
        raise UnknownProduct("shipment needs at least one product")
    key = _shipment_key(args.shipment_id)
    if ctx.state.contains(key):
        raise DuplicateShipment(args.shipment_id)
    for product_id in args.product_ids:
        if not ctx.state.contains(_product_key(product_id)):
            raise UnknownProduct(product_id)
    shipment = Shipment(
        shipment_id=args.shipment_id,
        product_ids=args.product_ids,
        origin_org=ctx.org_id,
        dest_org=args.dest_org,
        status=ShipmentStatus.PENDING,
        events=(),
    )
    ctx.state.set(key, canonical_encode(shipment))
    return shipment


def track_shipment(ctx: CallContext, caller: AccountId, args: TrackArgs) -> Shipment:
    shipment = get_shipment(ctx.state, args.shipment_id)
    if shipment is None:
        raise UnknownShipment(args.shipment_id)
    event = TrackingEvent(kind=args.kind, block_number=ctx.block_number, location=args.location)
    updated = _append_event(shipment, event)
    put_shipment(ctx.state, updated)
    return updated


def submit_reading(ctx: CallContext, caller: AccountId, args: SubmitReadingArgs) -> Shipment:
    # Appending a tracking event needs Execute on the tracking pallet on
    # top of the pool's sensing-pallet check.
    if not ctx.registry.check_access(caller, "tracking", Permission.EXECUTE):
        raise NotAuthorized("sensor submitter lacks Execute on tracking")
    if args.reading.humidity_permille > 1000:
        raise InvalidReading(f"humidity {args.reading.humidity_permille} > 1000 permille")
    shipment = get_shipment(ctx.state, args.shipment_id)
    if shipment is None:
        raise UnknownShipment(args.shipment_id)
    if shipment.status != ShipmentStatus.IN_TRANSIT:
        raise IllegalTransition(f"reading on {shipment.status.name} shipment")
    event = TrackingEvent(
        kind=EventKind.SCAN,
        block_number=ctx.block_number,
        location=args.location,
        reading=args.reading,
    )
    updated = _append_event(shipment, event)
    put_shipment(ctx.state, updated)
    ctx.state.set(b"sensing/latest/" + args.shipment_id.encode(), canonical_encode(args.reading))
    return updated


def handoff_shipment(ctx: CallContext, caller: AccountId, args: HandoffArgs, head_hash: Hash) -> int:
    """Emit a ShipmentHandoff message for an InTransit shipment bound to
    another organization; returns the assigned sequence number."""
    shipment = get_shipment(ctx.state, args.shipment_id)
    if shipment is None:
        raise UnknownShipment(args.shipment_id)
    if shipment.status != ShipmentStatus.IN_TRANSIT or shipment.handed_off:
        raise IllegalTransition("handoff requires an InTransit, not-yet-handed-off shipment")
    dest_para_raw = ctx.state.get(b"xcm/orgdir/" + shipment.dest_org.encode())
    if dest_para_raw is None:
        raise ChannelNotOpen(f"destination org {shipment.dest_org!r} is not registered")
    dest_para = int.from_bytes(dest_para_raw, "little")
    cid = ChannelId(ctx.para_id, dest_para)
    payload = canonical_encode(
        ShipmentHandoffPayload(
            shipment=shipment,
            origin_org=ctx.org_id,
            origin_para=ctx.para_id,
            origin_head=head_hash,
        )
    )
    seq = ctx.emit_message(cid, MessageKind.SHIPMENT_HANDOFF, payload)
    put_shipment(ctx.state, replace(shipment, handed_off=True))
    return seq


def apply_handoff(ctx: CallContext, payload: bytes) -> Shipment:
    """Receiver side: instantiate the shipment with provenance attached."""
    record = canonical_decode(ShipmentHandoffPayload, payload)
    incoming = record.shipment
    provenance = Provenance(
        origin_para=record.origin_para,
        origin_org=record.origin_org,
        origin_head=record.origin_head,
        origin_events=incoming.events,
        origin_status=incoming.status,
    )
    local = Shipment(
        shipment_id=incoming.shipment_id,
        product_ids=incoming.product_ids,
        origin_org=incoming.origin_org,
        dest_org=incoming.dest_org,
        status=incoming.status,
        events=(),
        provenance=provenance,
        handed_off=False,
    )
    if ctx.state.contains(_shipment_key(local.shipment_id)):
        raise DuplicateShipment(local.shipment_id)
    put_shipment(ctx.state, local)
    return local


# -- dispatch ----------------------------------------------------------------


def execute_call(ctx: CallContext, caller: AccountId, pallet: str, call: str, args: bytes, head_hash: Hash) -> None:
    """Dispatch one pool-validated extrinsic; raises ChainError on failure."""
    try:
        if pallet == "products" and call == "register_product":
            register_product(ctx, caller, canonical_decode(RegisterProductArgs, args))
        elif pallet == "shipments" and call == "register_shipment":
            register_shipment(ctx, caller, canonical_decode(RegisterShipmentArgs, args))
        elif pallet == "shipments" and call == "handoff":
            handoff_shipment(ctx, caller, canonical_decode(HandoffArgs, args), head_hash)
        elif pallet == "tracking" and call == "track_shipment":
            track_shipment(ctx, caller, canonical_decode(TrackArgs, args))
        elif pallet == "sensing" and call == "submit_reading":
            submit_reading(ctx, caller, canonical_decode(SubmitReadingArgs, args))
        elif pallet == "rbac" and call == "assign_role":
            change = canonical_decode(RoleChangeArgs, args)
            ctx.registry.assign_role(caller, change.target, change.role)
        elif pallet == "rbac" and call == "revoke_role":
            change = canonical_decode(RoleChangeArgs, args)
            ctx.registry.revoke_role(caller, change.target, change.role)
        else:
            raise UnknownCall(f"{pallet}.{call}")
    except ChainError:
        raise
    except Exception as exc:  # malformed args decode as a call failure
        raise UnknownCall(f"{pallet}.{call}: {exc}") from exc
