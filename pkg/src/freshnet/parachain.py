"""Per-organization permissioned chain.

One collator (the organization's node) authors a linear chain of
parablocks.  Block execution is a pure function of (parent state, block):

1. relay updates (inherent data mirrored from finalized relay blocks:
   channel lifecycle, routed watermarks, the org directory);
2. inbound cross-chain messages, applied in contiguous sequence order;
3. pool-validated extrinsics, in order, each re-checked against the
   registry state at inclusion time - a failing extrinsic invalidates
   the block, and authoring never includes one;
4. raw outbound sends (collator-injected payloads) appended after any
   messages emitted by pallet calls, taking the following sequence
   numbers.

The header commits the post-state root, the extrinsics root, and the
outbound-message root; re-executing any authored block on a fresh copy
of the parent state reproduces all three.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace

from freshnet.core import StateStore
from freshnet.core.codec import Reader, Writer, canonical_decode, canonical_encode
from freshnet.core.extrinsic import Extrinsic
from freshnet.core.hashing import DIGEST_SIZE, EMPTY_HASH, Hash, hash_blob
from freshnet.core.keys import ACCOUNT_SIZE, AccountId, Keypair
from freshnet.core.merkle import merkle_root
from freshnet.errors import (
    ChainError,
    ChannelFull,
    ChannelNotOpen,
    MessageTooBig,
    NotCollator,
)
from freshnet.pallets import CallContext, execute_call
from freshnet.rbac import RoleRegistry, validate_in_pool
from freshnet.xcm import (
    Channel,
    ChannelId,
    ChannelState,
    MessageKind,
    OutboundQueue,
    XcmMessage,
)

#: Identifies the state-transition logic registered with the relay; the
#: relay rejects candidates whose receipts cite a different code hash.
VALIDATION_CODE_HASH: Hash = hash_blob(b"freshnet/parachain-stf/v1")


class RelayUpdateKind(enum.IntEnum):
    CHANNEL_OPENED = 0
    CHANNEL_CLOSED = 1
    ROUTED = 2
    ORG_REGISTERED = 3
    ORG_DEREGISTERED = 4


@dataclass(frozen=True)
class RelayUpdate:
    """Inherent record mirroring one relay-side fact into chain state."""

    kind: RelayUpdateKind
    channel: ChannelId = ChannelId(0, 0)
    seq_no: int = 0
    org_id: str = ""
    para_id: int = 0
    capacity: int = 0
    max_message_bytes: int = 0

    def encode_into(self, w: Writer) -> None:
        w.u8(int(self.kind))
        self.channel.encode_into(w)
        w.u64(self.seq_no)
        w.text(self.org_id)
        w.u64(self.para_id)
        w.u32(self.capacity)
        w.u32(self.max_message_bytes)

    @classmethod
    def decode_from(cls, r: Reader) -> "RelayUpdate":
        return cls(
            kind=RelayUpdateKind(r.u8()),
            channel=ChannelId.decode_from(r),
            seq_no=r.u64(),
            org_id=r.text(),
            para_id=r.u64(),
            capacity=r.u32(),
            max_message_bytes=r.u32(),
        )


@dataclass(frozen=True)
class ParaHeader:
    para_id: int
    number: int
    parent_hash: Hash
    state_root: Hash
    extrinsics_root: Hash
    outbound_root: Hash

    def encode_into(self, w: Writer) -> None:
        w.u64(self.para_id)
        w.u64(self.number)
        w.fixed(self.parent_hash, DIGEST_SIZE)
        w.fixed(self.state_root, DIGEST_SIZE)
        w.fixed(self.extrinsics_root, DIGEST_SIZE)
        w.fixed(self.outbound_root, DIGEST_SIZE)

    @classmethod
    def decode_from(cls, r: Reader) -> "ParaHeader":
        return cls(
            para_id=r.u64(),
            number=r.u64(),
            parent_hash=r.fixed(DIGEST_SIZE),
            state_root=r.fixed(DIGEST_SIZE),
            extrinsics_root=r.fixed(DIGEST_SIZE),
            outbound_root=r.fixed(DIGEST_SIZE),
        )

    def hash(self) -> Hash:
        cached = getattr(self, "_cached_hash", None)
        if cached is None:
            cached = hash_blob(canonical_encode(self))
            object.__setattr__(self, "_cached_hash", cached)
        return cached


@dataclass(frozen=True)
class ParaBlock:
    header: ParaHeader
    extrinsics: tuple[Extrinsic, ...]
    outbound: tuple[XcmMessage, ...]
    inbound: tuple[XcmMessage, ...]
    relay_updates: tuple[RelayUpdate, ...]

    def encode_into(self, w: Writer) -> None:
        self.header.encode_into(w)
        w.seq(list(self.extrinsics), lambda w_, x: x.encode_into(w_))
        w.seq(list(self.outbound), lambda w_, m: m.encode_into(w_))
        w.seq(list(self.inbound), lambda w_, m: m.encode_into(w_))
        w.seq(list(self.relay_updates), lambda w_, u: u.encode_into(w_))

    @classmethod
    def decode_from(cls, r: Reader) -> "ParaBlock":
        return cls(
            header=ParaHeader.decode_from(r),
            extrinsics=tuple(r.seq(Extrinsic.decode_from)),
            outbound=tuple(r.seq(XcmMessage.decode_from)),
            inbound=tuple(r.seq(XcmMessage.decode_from)),
            relay_updates=tuple(r.seq(RelayUpdate.decode_from)),
        )

    def hash(self) -> Hash:
        return self.header.hash()


# -- state keys ---------------------------------------------------------------


def _nonce_key(account: AccountId) -> bytes:
    return b"system/nonce/" + account.hex().encode()


def _channel_key(cid: ChannelId) -> bytes:
    return b"xcm/channel/%d-%d" % (cid.sender, cid.receiver)


def _out_seq_key(cid: ChannelId) -> bytes:
    return b"xcm/out_seq/%d-%d" % (cid.sender, cid.receiver)


def _in_seq_key(cid: ChannelId) -> bytes:
    return b"xcm/in_seq/%d-%d" % (cid.sender, cid.receiver)


def _routed_key(cid: ChannelId) -> bytes:
    return b"xcm/routed/%d-%d" % (cid.sender, cid.receiver)


def _u64_get(state: StateStore, key: bytes, default: int = 0) -> int:
    raw = state.get(key)
    return int.from_bytes(raw, "little") if raw is not None else default


def _u64_set(state: StateStore, key: bytes, value: int) -> None:
    state.set(key, value.to_bytes(8, "little"))


def account_nonce(state: StateStore, account: AccountId) -> int:
    return _u64_get(state, _nonce_key(account))


def state_channel(state: StateStore, cid: ChannelId) -> Channel | None:
    raw = state.get(_channel_key(cid))
    return canonical_decode(Channel, raw) if raw is not None else None


def org_id_of(state: StateStore) -> str:
    raw = state.get(b"system/org")
    return raw.decode() if raw is not None else ""


def para_id_of(state: StateStore) -> int:
    return _u64_get(state, b"system/para_id")


def collator_of(state: StateStore) -> AccountId:
    return state.get(b"system/collator") or b"\x00" * ACCOUNT_SIZE


# -- genesis ------------------------------------------------------------------


@dataclass(frozen=True)
class GenesisSpec:
    """Parachain genesis configuration (the genesis JSON file)."""

    org_id: str
    chain_name: str
    admins: tuple[AccountId, ...]
    initial_grants: tuple[tuple[AccountId, str, str], ...] = ()
    collator: AccountId = b"\x00" * ACCOUNT_SIZE
    para_id: int = 0

    @classmethod
    def from_json(cls, text: str) -> "GenesisSpec":
        data = json.loads(text)
        return cls(
            org_id=data["org_id"],
            chain_name=data.get("chain_name", data["org_id"]),
            admins=tuple(bytes.fromhex(a) for a in data.get("admins", [])),
            initial_grants=tuple(
                (bytes.fromhex(acct), pallet, perm)
                for acct, pallet, perm in data.get("initial_grants", [])
            ),
            collator=bytes.fromhex(data["collator"]) if data.get("collator") else b"\x00" * 32,
            para_id=int(data.get("para_id", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "para_id": self.para_id,
                "org_id": self.org_id,
                "chain_name": self.chain_name,
                "admins": [a.hex() for a in self.admins],
                "initial_grants": [
                    [acct.hex(), pallet, perm] for acct, pallet, perm in self.initial_grants
                ],
                "collator": self.collator.hex(),
            },
            indent=2,
        )


def build_genesis_state(spec: GenesisSpec) -> StateStore:
    from freshnet.rbac import Permission, Role

    state = StateStore()
    state.set(b"system/org", spec.org_id.encode())
    state.set(b"system/chain_name", spec.chain_name.encode())
    _u64_set(state, b"system/para_id", spec.para_id)
    state.set(b"system/collator", spec.collator)
    registry = RoleRegistry(state)
    for admin in spec.admins:
        registry.seed_admin(admin)
    for account, pallet, perm in spec.initial_grants:
        registry.seed_grant(account, Role(pallet, Permission.parse(perm)))
    return state


def genesis_header(state: StateStore) -> ParaHeader:
    return ParaHeader(
        para_id=para_id_of(state),
        number=0,
        parent_hash=b"\x00" * DIGEST_SIZE,
        state_root=state.root(),
        extrinsics_root=EMPTY_HASH,
        outbound_root=EMPTY_HASH,
    )


def export_genesis(state: StateStore) -> str:
    """Hex encoding of the canonical genesis state snapshot."""
    return canonical_encode(state).hex()


def import_genesis(hex_text: str) -> StateStore:
    return canonical_decode(StateStore, bytes.fromhex(hex_text.strip()))


# -- inbound processing -------------------------------------------------------


@dataclass
class InboundResult:
    applied: list[XcmMessage]
    errors: dict[ChannelId, str]  # channel -> reason at the halt point


def process_inbound(state: StateStore, messages: list[XcmMessage] | tuple[XcmMessage, ...]) -> InboundResult:
    """Apply messages in per-channel contiguous order.

    A sequence gap (or duplicate) halts that channel's processing and
    leaves later messages unapplied; other channels continue.  The
    per-channel watermark advances with each applied message.
    """
    ctx = CallContext(
        state=state,
        registry=RoleRegistry(state),
        org_id=org_id_of(state),
        para_id=para_id_of(state),
        block_number=0,
    )
    applied: list[XcmMessage] = []
    errors: dict[ChannelId, str] = {}
    for message in messages:
        cid = message.channel
        if cid in errors:
            continue
        watermark = _u64_get(state, _in_seq_key(cid))
        if message.seq_no != watermark + 1:
            errors[cid] = "GapDetected"
            continue
        if message.kind == MessageKind.SHIPMENT_HANDOFF:
            from freshnet.pallets import apply_handoff

            apply_handoff(ctx, message.payload)
        elif message.kind == MessageKind.PRODUCT_ATTESTATION:
            state.set(
                b"products/attestation/%d-%d/%d" % (cid.sender, cid.receiver, message.seq_no),
                message.payload,
            )
        # RAW messages advance the watermark without touching pallet state.
        _u64_set(state, _in_seq_key(cid), message.seq_no)
        applied.append(message)
    return InboundResult(applied=applied, errors=errors)


def _apply_relay_update(state: StateStore, update: RelayUpdate) -> None:
    if update.kind == RelayUpdateKind.CHANNEL_OPENED:
        channel = Channel(
            id=update.channel,
            state=ChannelState.OPEN,
            capacity=update.capacity,
            max_message_bytes=update.max_message_bytes,
        )
        state.set(_channel_key(update.channel), canonical_encode(channel))
    elif update.kind == RelayUpdateKind.CHANNEL_CLOSED:
        existing = state_channel(state, update.channel)
        if existing is not None:
            state.set(
                _channel_key(update.channel),
                canonical_encode(replace(existing, state=ChannelState.CLOSED)),
            )
    elif update.kind == RelayUpdateKind.ROUTED:
        key = _routed_key(update.channel)
        if update.seq_no > _u64_get(state, key):
            _u64_set(state, key, update.seq_no)
    elif update.kind == RelayUpdateKind.ORG_REGISTERED:
        state.set(b"xcm/orgdir/" + update.org_id.encode(), update.para_id.to_bytes(8, "little"))
    elif update.kind == RelayUpdateKind.ORG_DEREGISTERED:
        state.delete(b"xcm/orgdir/" + update.org_id.encode())


# -- execution ----------------------------------------------------------------


@dataclass
class ExecutionResult:
    state: StateStore | None
    outbound: tuple[XcmMessage, ...]
    reason: str | None  # None = valid

    @property
    def ok(self) -> bool:
        return self.reason is None


def _outbound_root(outbound: tuple[XcmMessage, ...] | list[XcmMessage]) -> Hash:
    if not outbound:
        return EMPTY_HASH
    return merkle_root([m.leaf_bytes() for m in outbound])


def _extrinsics_root(extrinsics) -> Hash:
    if not extrinsics:
        return EMPTY_HASH
    return merkle_root([canonical_encode(x) for x in extrinsics])


class _Emitter:
    """Assigns outbound sequence numbers against in-state counters."""

    def __init__(self, state: StateStore, para_id: int, block_number: int):
        self.state = state
        self.para_id = para_id
        self.block_number = block_number
        self.messages: list[XcmMessage] = []

    def emit(self, cid: ChannelId, kind: MessageKind, payload: bytes) -> int:
        channel = state_channel(self.state, cid)
        if channel is None or channel.state != ChannelState.OPEN:
            raise ChannelNotOpen(cid.label())
        if len(payload) > channel.max_message_bytes:
            raise MessageTooBig(f"{len(payload)} > {channel.max_message_bytes}")
        out_seq = _u64_get(self.state, _out_seq_key(cid))
        routed = _u64_get(self.state, _routed_key(cid))
        if out_seq + 1 - routed > channel.capacity:
            raise ChannelFull(cid.label())
        seq = out_seq + 1
        _u64_set(self.state, _out_seq_key(cid), seq)
        message = XcmMessage(
            channel=cid,
            seq_no=seq,
            kind=kind,
            payload=payload,
            origin_para=self.para_id,
            origin_block=self.block_number,
        )
        self.messages.append(message)
        return seq


def execute_block(parent_state: StateStore, block: ParaBlock) -> ExecutionResult:
    """Deterministically re-execute *block* on a copy of *parent_state*.

    Returns the post-state on success; any failing extrinsic, inbound
    ordering violation, root mismatch, or malformed raw send marks the
    whole block Invalid with a reason code.
    """
    state = parent_state.copy()
    para_id = para_id_of(state)
    org_id = org_id_of(state)
    header = block.header
    if header.para_id != para_id:
        return ExecutionResult(None, (), "RootMismatch")

    for update in block.relay_updates:
        _apply_relay_update(state, update)

    inbound = process_inbound(state, block.inbound)
    if inbound.errors or len(inbound.applied) != len(block.inbound):
        return ExecutionResult(None, (), "GapDetected")

    emitter = _Emitter(state, para_id, header.number)
    registry = RoleRegistry(state)
    ctx = CallContext(
        state=state,
        registry=registry,
        org_id=org_id,
        para_id=para_id,
        block_number=header.number,
        emit_message=emitter.emit,
    )
    for xt in block.extrinsics:
        if not xt.verify_signature():
            return ExecutionResult(None, (), "BadIdentity")
        expected = account_nonce(state, xt.signer)
        if xt.nonce != expected:
            return ExecutionResult(None, (), "StaleNonce")
        verdict = validate_in_pool(registry, xt)
        if not verdict.accepted:
            return ExecutionResult(None, (), "BadIdentity")
        try:
            execute_call(ctx, xt.signer, xt.target_pallet, xt.call, xt.args, header.parent_hash)
        except ChainError as exc:
            return ExecutionResult(None, (), exc.code)
        _u64_set(state, _nonce_key(xt.signer), expected + 1)

    emitted = emitter.messages
    if len(block.outbound) < len(emitted) or tuple(block.outbound[: len(emitted)]) != tuple(emitted):
        return ExecutionResult(None, (), "RootMismatch")
    for message in block.outbound[len(emitted):]:
        if message.kind != MessageKind.RAW:
            return ExecutionResult(None, (), "RootMismatch")
        try:
            seq = emitter.emit(message.channel, message.kind, message.payload)
        except ChainError as exc:
            return ExecutionResult(None, (), exc.code)
        if seq != message.seq_no or message.origin_para != para_id or message.origin_block != header.number:
            return ExecutionResult(None, (), "RootMismatch")

    outbound = tuple(emitter.messages)
    if _outbound_root(outbound) != header.outbound_root:
        return ExecutionResult(None, (), "RootMismatch")
    if _extrinsics_root(block.extrinsics) != header.extrinsics_root:
        return ExecutionResult(None, (), "RootMismatch")
    if state.root() != header.state_root:
        return ExecutionResult(None, (), "RootMismatch")
    return ExecutionResult(state, outbound, None)


# -- transaction pool ---------------------------------------------------------


@dataclass(frozen=True)
class PoolStatus:
    accepted: bool
    reason: str | None = None


class TransactionPool:
    """FIFO pool with signature, nonce, and rbac gating at submission."""

    def __init__(self) -> None:
        self.queue: list[Extrinsic] = []
        self.rejections: list[tuple[Hash, str]] = []

    def _queued_count(self, account: AccountId) -> int:
        return sum(1 for xt in self.queue if xt.signer == account)

    def expected_nonce(self, state: StateStore, account: AccountId) -> int:
        return account_nonce(state, account) + self._queued_count(account)

    def submit(self, state: StateStore, xt: Extrinsic) -> PoolStatus:
        if not xt.verify_signature():
            self.rejections.append((xt.hash(), "BadSignature"))
            return PoolStatus(False, "BadSignature")
        if xt.nonce != self.expected_nonce(state, xt.signer):
            self.rejections.append((xt.hash(), "StaleNonce"))
            return PoolStatus(False, "StaleNonce")
        verdict = validate_in_pool(RoleRegistry(state), xt)
        if not verdict.accepted:
            self.rejections.append((xt.hash(), verdict.reason or "NotAuthorized"))
            return PoolStatus(False, verdict.reason)
        self.queue.append(xt)
        return PoolStatus(True)

    def take_all(self) -> list[Extrinsic]:
        taken, self.queue = self.queue, []
        return taken

    def requeue(self, extrinsics: list[Extrinsic]) -> None:
        self.queue = extrinsics + self.queue


# -- the chain ----------------------------------------------------------------


class Parachain:
    """A collator's full view of its organization chain."""

    def __init__(self, genesis_state: StateStore, collator: Keypair | None = None):
        self.genesis_state = genesis_state.copy()
        self.state = genesis_state.copy()
        self.headers: list[ParaHeader] = [genesis_header(self.state)]
        self.blocks: list[ParaBlock] = []
        self.pool = TransactionPool()
        self.collator = collator
        self.para_id = para_id_of(self.state)
        self.org_id = org_id_of(self.state)
        self.outbound_queues: dict[ChannelId, OutboundQueue] = {}
        self.pending_relay_updates: list[RelayUpdate] = []
        self.inbound_ready: dict[ChannelId, dict[int, XcmMessage]] = {}
        # leaf hash -> leaf bytes, plus (channel, seq) -> leaf hash
        self.outbound_archive: dict[Hash, bytes] = {}
        self.outbound_index: dict[tuple[ChannelId, int], Hash] = {}
        self.exclusions: list[tuple[Hash, str]] = []

    # -- views ------------------------------------------------------------

    @property
    def head(self) -> ParaHeader:
        return self.headers[-1]

    def header_by_number(self, number: int) -> ParaHeader | None:
        if 0 <= number < len(self.headers):
            return self.headers[number]
        return None

    def registry(self) -> RoleRegistry:
        return RoleRegistry(self.state)

    # -- submission --------------------------------------------------------

    def submit_extrinsic(self, xt: Extrinsic) -> PoolStatus:
        return self.pool.submit(self.state, xt)

    def queue_relay_update(self, update: RelayUpdate) -> None:
        self.pending_relay_updates.append(update)
        # keep node-side capacity accounting in step with routing progress
        if update.kind == RelayUpdateKind.ROUTED and update.channel.sender == self.para_id:
            queue = self.outbound_queues.get(update.channel)
            if queue is not None:
                queue.mark_routed(update.seq_no)
        if update.kind == RelayUpdateKind.CHANNEL_OPENED and update.channel.sender == self.para_id:
            self.outbound_queues.setdefault(
                update.channel,
                OutboundQueue(
                    Channel(
                        id=update.channel,
                        state=ChannelState.OPEN,
                        capacity=update.capacity,
                        max_message_bytes=update.max_message_bytes,
                    )
                ),
            )

    def send_raw(self, cid: ChannelId, payload: bytes, kind: MessageKind = MessageKind.RAW) -> int:
        """Queue a collator-level outbound message for the next block.

        Raises ChannelNotOpen/ChannelFull/MessageTooBig; never drops."""
        queue = self.outbound_queues.get(cid)
        if queue is None:
            raise ChannelNotOpen(cid.label())
        # include updates already queued for the next block
        pending_open = any(
            u.kind == RelayUpdateKind.CHANNEL_OPENED and u.channel == cid
            for u in self.pending_relay_updates
        )
        committed = _u64_get(self.state, _out_seq_key(cid))
        if state_channel(self.state, cid) is None and not pending_open:
            raise ChannelNotOpen(cid.label())
        return queue.send(kind, payload, committed)

    def stage_inbound(self, message: XcmMessage) -> None:
        """Buffer a verified inbound message until its turn."""
        per_channel = self.inbound_ready.setdefault(message.channel, {})
        per_channel.setdefault(message.seq_no, message)

    def _drain_inbound(self) -> list[XcmMessage]:
        batch: list[XcmMessage] = []
        for cid in sorted(self.inbound_ready):
            per_channel = self.inbound_ready[cid]
            next_seq = _u64_get(self.state, _in_seq_key(cid)) + 1
            while next_seq in per_channel:
                batch.append(per_channel.pop(next_seq))
                next_seq += 1
        return batch

    # -- authoring ---------------------------------------------------------

    def author_parablock(self, signer: Keypair | None = None) -> ParaBlock:
        """Execute the pool against the head state and seal a new block."""
        key = signer or self.collator
        if key is None or key.account != collator_of(self.state):
            raise NotCollator("only the registered collator authors parablocks")
        parent = self.head
        number = parent.number + 1
        state = self.state.copy()

        relay_updates = tuple(self.pending_relay_updates)
        self.pending_relay_updates = []
        for update in relay_updates:
            _apply_relay_update(state, update)

        inbound = tuple(self._drain_inbound())
        result = process_inbound(state, inbound)
        assert not result.errors, "authoring staged a non-contiguous inbound run"

        emitter = _Emitter(state, self.para_id, number)
        registry = RoleRegistry(state)
        ctx = CallContext(
            state=state,
            registry=registry,
            org_id=self.org_id,
            para_id=self.para_id,
            block_number=number,
            emit_message=emitter.emit,
        )
        included: list[Extrinsic] = []
        for xt in self.pool.take_all():
            if xt.nonce != account_nonce(state, xt.signer):
                self.exclusions.append((xt.hash(), "StaleNonce"))
                continue
            verdict = validate_in_pool(registry, xt)
            if not verdict.accepted:
                self.exclusions.append((xt.hash(), verdict.reason or "NotAuthorized"))
                continue
            snapshot = state.copy()
            emitted_before = len(emitter.messages)
            try:
                execute_call(ctx, xt.signer, xt.target_pallet, xt.call, xt.args, parent.hash())
            except ChainError as exc:
                # roll back this extrinsic's effects and drop it
                state = snapshot
                del emitter.messages[emitted_before:]
                emitter.state = state
                ctx.state = state
                ctx.registry = RoleRegistry(state)
                registry = ctx.registry
                self.exclusions.append((xt.hash(), exc.code))
                continue
            _u64_set(state, _nonce_key(xt.signer), xt.nonce + 1)
            included.append(xt)

        # raw sends take the sequence numbers after pallet-emitted messages
        for cid in sorted(self.outbound_queues):
            queue = self.outbound_queues[cid]
            pending = queue.drain_pending()
            for position, (kind, payload) in enumerate(pending):
                try:
                    emitter.emit(cid, kind, payload)
                except ChainError:
                    queue.requeue_front(pending[position:])
                    break

        outbound = tuple(emitter.messages)
        header = ParaHeader(
            para_id=self.para_id,
            number=number,
            parent_hash=parent.hash(),
            state_root=state.root(),
            extrinsics_root=_extrinsics_root(included),
            outbound_root=_outbound_root(outbound),
        )
        block = ParaBlock(
            header=header,
            extrinsics=tuple(included),
            outbound=outbound,
            inbound=inbound,
            relay_updates=relay_updates,
        )
        self._adopt(block, state)
        return block

    def _adopt(self, block: ParaBlock, state: StateStore) -> None:
        self.blocks.append(block)
        self.headers.append(block.header)
        self.state = state
        for message in block.outbound:
            leaf = message.leaf_bytes()
            ref = hash_blob(leaf)
            self.outbound_archive[ref] = leaf
            self.outbound_index[(message.channel, message.seq_no)] = ref

    def import_block(self, block: ParaBlock) -> str | None:
        """Append a block authored elsewhere (or replayed); returns a
        reason code if it does not execute cleanly."""
        if block.header.parent_hash != self.head.hash():
            return "RootMismatch"
        result = execute_block(self.state, block)
        if not result.ok:
            return result.reason
        self._adopt(block, result.state)
        return None

    def rollback_to(self, number: int) -> None:
        """Discard blocks above *number* and rebuild state by replay."""
        if number >= self.head.number:
            return
        kept = self.blocks[:number]
        self.blocks = []
        self.headers = [genesis_header(self.genesis_state)]
        self.state = self.genesis_state.copy()
        self.outbound_archive.clear()
        self.outbound_index.clear()
        for block in kept:
            result = execute_block(self.state, block)
            assert result.ok, "replay of our own chain failed"
            self._adopt(block, result.state)

    def serve_fetch(self, payload_ref: Hash) -> bytes | None:
        return self.outbound_archive.get(payload_ref)
