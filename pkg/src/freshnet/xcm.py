"""Cross-chain message channels, relay routing, and receiver-side checks.

Channels are ordered (sender, receiver) parachain pairs created by a
request/accept handshake and tracked in relay state.  Messages carry a
per-channel contiguous sequence number and travel with the sender's next
parablock, whose header commits them under an outbound Merkle root (the
postage root).

Two relay storage modes:

* HRMP - the relay block stores each message's full payload;
* XCMP - the relay block stores only the 32-byte leaf reference; the
  receiver fetches the payload from the sending collator by hash and
  verifies the Merkle proof against the postage root.

Receivers apply a message only if its sequence number is contiguous, its
postage proof verifies, and the postage root belongs to a finalized
header of the sending chain.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from freshnet.core.codec import Reader, Writer, canonical_encode
from freshnet.core.hashing import DIGEST_SIZE, Hash, hash_blob
from freshnet.core.merkle import MerkleProof, merkle_verify
from freshnet.errors import ChannelExists, ChannelFull, ChannelNotOpen, MessageTooBig

ParaId = int


@dataclass(frozen=True, order=True)
class ChannelId:
    sender: ParaId
    receiver: ParaId

    def encode_into(self, w: Writer) -> None:
        w.u64(self.sender)
        w.u64(self.receiver)

    @classmethod
    def decode_from(cls, r: Reader) -> "ChannelId":
        return cls(r.u64(), r.u64())

    def label(self) -> str:
        return f"{self.sender}->{self.receiver}"


class ChannelState(enum.IntEnum):
    REQUESTED = 0
    OPEN = 1
    CLOSED = 2


class MessageKind(enum.IntEnum):
    SHIPMENT_HANDOFF = 0
    PRODUCT_ATTESTATION = 1
    RAW = 2


class StorageMode(enum.IntEnum):
    HRMP = 0
    XCMP = 1


@dataclass(frozen=True)
class Channel:
    id: ChannelId
    state: ChannelState
    capacity: int
    max_message_bytes: int
    next_send_seq: int = 1
    next_recv_seq: int = 1

    def encode_into(self, w: Writer) -> None:
        self.id.encode_into(w)
        w.u8(int(self.state))
        w.u32(self.capacity)
        w.u32(self.max_message_bytes)
        w.u64(self.next_send_seq)
        w.u64(self.next_recv_seq)

    @classmethod
    def decode_from(cls, r: Reader) -> "Channel":
        return cls(
            id=ChannelId.decode_from(r),
            state=ChannelState(r.u8()),
            capacity=r.u32(),
            max_message_bytes=r.u32(),
            next_send_seq=r.u64(),
            next_recv_seq=r.u64(),
        )


@dataclass(frozen=True)
class XcmMessage:
    channel: ChannelId
    seq_no: int
    kind: MessageKind
    payload: bytes
    origin_para: ParaId
    origin_block: int

    def encode_into(self, w: Writer) -> None:
        self.channel.encode_into(w)
        w.u64(self.seq_no)
        w.u8(int(self.kind))
        w.blob(self.payload)
        w.u64(self.origin_para)
        w.u64(self.origin_block)

    @classmethod
    def decode_from(cls, r: Reader) -> "XcmMessage":
        return cls(
            channel=ChannelId.decode_from(r),
            seq_no=r.u64(),
            kind=MessageKind(r.u8()),
            payload=r.blob(),
            origin_para=r.u64(),
            origin_block=r.u64(),
        )

    def leaf_bytes(self) -> bytes:
        cached = getattr(self, "_cached_leaf", None)
        if cached is None:
            cached = canonical_encode(self)
            object.__setattr__(self, "_cached_leaf", cached)
        return cached

    def leaf_hash(self) -> Hash:
        cached = getattr(self, "_cached_leaf_hash", None)
        if cached is None:
            cached = hash_blob(self.leaf_bytes())
            object.__setattr__(self, "_cached_leaf_hash", cached)
        return cached


@dataclass(frozen=True)
class RelayStoredEntry:
    """What the relay block records for one routed message.

    ``payload`` is the full message bytes in HRMP mode and empty in XCMP
    mode, where ``payload_ref`` (the Merkle leaf hash under the sender's
    outbound root) identifies the message instead.  The proof of postage
    (leaf proof against ``postage_root``) rides along in both modes.
    """

    channel: ChannelId
    seq_no: int
    mode: StorageMode
    payload: bytes
    payload_ref: Hash
    postage_root: Hash
    proof: MerkleProof
    origin_para: ParaId
    origin_block: int

    def encode_into(self, w: Writer) -> None:
        self.channel.encode_into(w)
        w.u64(self.seq_no)
        w.u8(int(self.mode))
        w.blob(self.payload)
        w.fixed(self.payload_ref, DIGEST_SIZE)
        w.fixed(self.postage_root, DIGEST_SIZE)
        self.proof.encode_into(w)
        w.u64(self.origin_para)
        w.u64(self.origin_block)

    @classmethod
    def decode_from(cls, r: Reader) -> "RelayStoredEntry":
        return cls(
            channel=ChannelId.decode_from(r),
            seq_no=r.u64(),
            mode=StorageMode(r.u8()),
            payload=r.blob(),
            payload_ref=r.fixed(DIGEST_SIZE),
            postage_root=r.fixed(DIGEST_SIZE),
            proof=MerkleProof.decode_from(r),
            origin_para=r.u64(),
            origin_block=r.u64(),
        )


@dataclass(frozen=True)
class FetchRequest:
    """Collator-to-collator payload fetch by leaf hash (XCMP mode)."""

    channel: ChannelId
    seq_no: int
    payload_ref: Hash

    def encode_into(self, w: Writer) -> None:
        self.channel.encode_into(w)
        w.u64(self.seq_no)
        w.fixed(self.payload_ref, DIGEST_SIZE)

    @classmethod
    def decode_from(cls, r: Reader) -> "FetchRequest":
        return cls(ChannelId.decode_from(r), r.u64(), r.fixed(DIGEST_SIZE))


@dataclass(frozen=True)
class FetchResponse:
    channel: ChannelId
    seq_no: int
    payload: bytes  # full encoded XcmMessage leaf bytes; empty if unknown

    def encode_into(self, w: Writer) -> None:
        self.channel.encode_into(w)
        w.u64(self.seq_no)
        w.blob(self.payload)

    @classmethod
    def decode_from(cls, r: Reader) -> "FetchResponse":
        return cls(ChannelId.decode_from(r), r.u64(), r.blob())


class ChannelRegistry:
    """Relay-side channel table (one open channel per ordered pair)."""

    def __init__(self) -> None:
        self.channels: dict[ChannelId, Channel] = {}

    def request(self, requester: ParaId, target: ParaId, capacity: int, max_bytes: int) -> Channel:
        cid = ChannelId(requester, target)
        if requester == target:
            raise ChannelExists("sender and receiver must differ")
        existing = self.channels.get(cid)
        if existing is not None and existing.state != ChannelState.CLOSED:
            raise ChannelExists(cid.label())
        channel = Channel(cid, ChannelState.REQUESTED, capacity, max_bytes)
        self.channels[cid] = channel
        return channel

    def accept(self, cid: ChannelId) -> Channel:
        existing = self.channels.get(cid)
        if existing is None or existing.state != ChannelState.REQUESTED:
            raise ChannelNotOpen(f"no pending request for {cid.label()}")
        channel = replace(existing, state=ChannelState.OPEN)
        self.channels[cid] = channel
        return channel

    def close_for_para(self, para: ParaId) -> list[ChannelId]:
        closed = []
        for cid, ch in list(self.channels.items()):
            if para in (cid.sender, cid.receiver) and ch.state != ChannelState.CLOSED:
                self.channels[cid] = replace(ch, state=ChannelState.CLOSED)
                closed.append(cid)
        return closed

    def get(self, cid: ChannelId) -> Channel | None:
        return self.channels.get(cid)

    def open_channels(self) -> list[Channel]:
        return [c for c in self.channels.values() if c.state == ChannelState.OPEN]


class OutboundQueue:
    """Sender-side pending sends plus the in-flight bound for one channel.

    Sequence numbers are assigned by the state-transition function when
    the message enters a parablock; the queue holds (kind, payload) pairs
    awaiting the next block.  ``in_flight`` counts messages sent but not
    yet routed by the relay; a send past ``capacity`` fails with
    ChannelFull rather than dropping, so callers retry once routing
    frees capacity.  ``committed_seq`` is the highest sequence number the
    chain head state has assigned on this channel.
    """

    def __init__(self, channel: Channel):
        self.id = channel.id
        self.capacity = channel.capacity
        self.max_message_bytes = channel.max_message_bytes
        self.routed_seq = 0  # highest seq the relay has routed
        self.pending: list[tuple[MessageKind, bytes]] = []

    def in_flight(self, committed_seq: int) -> int:
        return committed_seq + len(self.pending) - self.routed_seq

    def send(self, kind: MessageKind, payload: bytes, committed_seq: int) -> int:
        """Queue a payload; returns its provisional position. Raises
        MessageTooBig or ChannelFull (never drops)."""
        if len(payload) > self.max_message_bytes:
            raise MessageTooBig(f"{len(payload)} > {self.max_message_bytes}")
        if self.in_flight(committed_seq) >= self.capacity:
            raise ChannelFull(f"{self.id.label()} has {self.in_flight(committed_seq)} in flight")
        self.pending.append((kind, payload))
        return committed_seq + len(self.pending)

    def drain_pending(self) -> list[tuple[MessageKind, bytes]]:
        drained, self.pending = self.pending, []
        return drained

    def requeue_front(self, items: list[tuple[MessageKind, bytes]]) -> None:
        self.pending = items + self.pending

    def mark_routed(self, seq_no: int) -> None:
        if seq_no > self.routed_seq:
            self.routed_seq = seq_no


def verify_postage(entry: RelayStoredEntry, leaf_bytes: bytes) -> bool:
    """Check the proof of postage: the message's leaf bytes verify against
    the entry's postage root at the claimed position."""
    if hash_blob(leaf_bytes) != entry.payload_ref:
        return False
    return merkle_verify(entry.postage_root, leaf_bytes, entry.proof)
