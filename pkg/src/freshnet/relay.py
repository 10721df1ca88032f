"""The relay chain: hub of the consortium.

Validators carry six runtime concerns: parachain registration (paras),
shared configuration, scheduling/validator assignment, candidate
validity, inclusion/availability, and cross-chain message routing.
Block production is a round-robin slot rotation (author = slot mod
validator count); finality is a separate supermajority vote count - a
block is final once ceil(2/3 * validators) distinct voters endorse it or
a descendant.  Equivocating voters have both votes discarded and are
flagged.  Disputes re-run validation across all validators; a
supermajority of Invalid verdicts overturns an included candidate and
reverts the parachain head.

Registration is non-destructive: deregistering an organization removes
its registry entry and closes its channels, but its chain data persists
and its ParaId is never reallocated.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field, replace

from freshnet.core import StateStore
from freshnet.core.codec import Reader, Writer, canonical_encode
from freshnet.core.hashing import DIGEST_SIZE, Hash, hash_blob
from freshnet.core.keys import ACCOUNT_SIZE, SIGNATURE_SIZE, AccountId, Keypair, verify
from freshnet.core.merkle import prove_all
from freshnet.errors import (
    CapacityExceeded,
    ConfigInvalid,
    NoValidators,
    NotRegistered,
    OrgAlreadyRegistered,
    UnknownOrg,
    UnknownReceipt,
)
from freshnet.parachain import ParaBlock, ParaHeader, execute_block
from freshnet.xcm import (
    ChannelId,
    ChannelRegistry,
    RelayStoredEntry,
    StorageMode,
    XcmMessage,
)

#: Candidates not included within this many relay blocks are dropped and
#: must be resubmitted by their collator.
INCLUSION_TIMEOUT_BLOCKS = 4


def supermajority(validator_count: int) -> int:
    """ceil(2/3 * n), the attestation/finality/dispute threshold."""
    return -(-2 * validator_count // 3)


@dataclass(frozen=True)
class Validator:
    account: AccountId
    index: int


@dataclass(frozen=True)
class SharedConfig:
    max_message_bytes: int = 65536
    channel_capacity: int = 16
    slot_duration_ticks: int = 10
    mode: StorageMode = StorageMode.HRMP
    routing_per_block: int = 64

    def encode_into(self, w: Writer) -> None:
        w.u32(self.max_message_bytes)
        w.u32(self.channel_capacity)
        w.u32(self.slot_duration_ticks)
        w.u8(int(self.mode))
        w.u32(self.routing_per_block)

    @classmethod
    def decode_from(cls, r: Reader) -> "SharedConfig":
        return cls(r.u32(), r.u32(), r.u32(), StorageMode(r.u8()), r.u32())

    def validate(self) -> None:
        if min(self.max_message_bytes, self.channel_capacity, self.slot_duration_ticks, self.routing_per_block) < 1:
            raise ConfigInvalid("all shared-config quantities must be >= 1")


@dataclass(frozen=True)
class CandidateReceipt:
    para_header: ParaHeader
    collator_sig: bytes
    validation_code_hash: Hash

    def encode_into(self, w: Writer) -> None:
        self.para_header.encode_into(w)
        w.fixed(self.collator_sig, SIGNATURE_SIZE)
        w.fixed(self.validation_code_hash, DIGEST_SIZE)

    @classmethod
    def decode_from(cls, r: Reader) -> "CandidateReceipt":
        return cls(ParaHeader.decode_from(r), r.fixed(SIGNATURE_SIZE), r.fixed(DIGEST_SIZE))

    def hash(self) -> Hash:
        cached = getattr(self, "_cached_hash", None)
        if cached is None:
            cached = hash_blob(canonical_encode(self))
            object.__setattr__(self, "_cached_hash", cached)
        return cached


def sign_receipt(collator: Keypair, header: ParaHeader, code_hash: Hash) -> CandidateReceipt:
    return CandidateReceipt(
        para_header=header,
        collator_sig=collator.sign(canonical_encode(header)),
        validation_code_hash=code_hash,
    )


@dataclass(frozen=True)
class Vote:
    """A finality vote: endorsement of one relay block (and its ancestors)."""

    block_hash: Hash
    number: int
    voter: AccountId
    signature: bytes

    def signing_payload(self) -> bytes:
        w = Writer()
        w.fixed(self.block_hash, DIGEST_SIZE)
        w.u64(self.number)
        return w.finish()

    def verify(self) -> bool:
        return verify(self.voter, self.signing_payload(), self.signature)

    def encode_into(self, w: Writer) -> None:
        w.fixed(self.block_hash, DIGEST_SIZE)
        w.u64(self.number)
        w.fixed(self.voter, ACCOUNT_SIZE)
        w.fixed(self.signature, SIGNATURE_SIZE)

    @classmethod
    def decode_from(cls, r: Reader) -> "Vote":
        return cls(r.fixed(DIGEST_SIZE), r.u64(), r.fixed(ACCOUNT_SIZE), r.fixed(SIGNATURE_SIZE))


def make_vote(keypair: Keypair, block_hash: Hash, number: int) -> Vote:
    w = Writer()
    w.fixed(block_hash, DIGEST_SIZE)
    w.u64(number)
    return Vote(block_hash, number, keypair.account, keypair.sign(w.finish()))


@dataclass(frozen=True)
class DisputeVote:
    receipt_hash: Hash
    claim_invalid: bool
    voter: AccountId
    signature: bytes

    def signing_payload(self) -> bytes:
        w = Writer()
        w.fixed(self.receipt_hash, DIGEST_SIZE)
        w.boolean(self.claim_invalid)
        return w.finish()

    def verify(self) -> bool:
        return verify(self.voter, self.signing_payload(), self.signature)

    def encode_into(self, w: Writer) -> None:
        w.fixed(self.receipt_hash, DIGEST_SIZE)
        w.boolean(self.claim_invalid)
        w.fixed(self.voter, ACCOUNT_SIZE)
        w.fixed(self.signature, SIGNATURE_SIZE)

    @classmethod
    def decode_from(cls, r: Reader) -> "DisputeVote":
        return cls(r.fixed(DIGEST_SIZE), r.boolean(), r.fixed(ACCOUNT_SIZE), r.fixed(SIGNATURE_SIZE))


def make_dispute_vote(keypair: Keypair, receipt_hash: Hash, claim_invalid: bool) -> DisputeVote:
    w = Writer()
    w.fixed(receipt_hash, DIGEST_SIZE)
    w.boolean(claim_invalid)
    return DisputeVote(receipt_hash, claim_invalid, keypair.account, keypair.sign(w.finish()))


class CommandKind(enum.IntEnum):
    REGISTER_PARA = 0
    DEREGISTER_PARA = 1
    OPEN_CHANNEL = 2
    ACCEPT_CHANNEL = 3
    SET_CONFIG = 4
    RESOLVE_DISPUTE = 5


@dataclass(frozen=True)
class RelayCommand:
    """Governance/registry operation carried in a relay block so every
    validator applies it at the same height."""

    kind: CommandKind
    org_id: str = ""
    genesis_head: ParaHeader | None = None
    genesis_state: bytes = b""  # canonical state snapshot for registration
    code_hash: Hash = b"\x00" * DIGEST_SIZE
    collator: AccountId = b"\x00" * ACCOUNT_SIZE
    channel: ChannelId = ChannelId(0, 0)
    config: SharedConfig | None = None
    receipt_hash: Hash = b"\x00" * DIGEST_SIZE
    dispute_votes: tuple[DisputeVote, ...] = ()

    def encode_into(self, w: Writer) -> None:
        w.u8(int(self.kind))
        w.text(self.org_id)
        w.option(self.genesis_head, lambda w_, h: h.encode_into(w_))
        w.blob(self.genesis_state)
        w.fixed(self.code_hash, DIGEST_SIZE)
        w.fixed(self.collator, ACCOUNT_SIZE)
        self.channel.encode_into(w)
        w.option(self.config, lambda w_, c: c.encode_into(w_))
        w.fixed(self.receipt_hash, DIGEST_SIZE)
        w.seq(list(self.dispute_votes), lambda w_, v: v.encode_into(w_))

    @classmethod
    def decode_from(cls, r: Reader) -> "RelayCommand":
        return cls(
            kind=CommandKind(r.u8()),
            org_id=r.text(),
            genesis_head=r.option(ParaHeader.decode_from),
            genesis_state=r.blob(),
            code_hash=r.fixed(DIGEST_SIZE),
            collator=r.fixed(ACCOUNT_SIZE),
            channel=ChannelId.decode_from(r),
            config=r.option(SharedConfig.decode_from),
            receipt_hash=r.fixed(DIGEST_SIZE),
            dispute_votes=tuple(r.seq(DisputeVote.decode_from)),
        )


@dataclass(frozen=True)
class RelayBlock:
    number: int
    parent_hash: Hash
    author_index: int
    included: tuple[tuple[CandidateReceipt, bytes], ...]  # receipt, attestation bitmap
    message_entries: tuple[RelayStoredEntry, ...]
    finality_votes: tuple[Vote, ...]
    commands: tuple[RelayCommand, ...]
    author_sig: bytes

    def _encode_body(self, w: Writer) -> None:
        w.u64(self.number)
        w.fixed(self.parent_hash, DIGEST_SIZE)
        w.u32(self.author_index)
        w.u32(len(self.included))
        for receipt, bitmap in self.included:
            receipt.encode_into(w)
            w.blob(bitmap)
        w.seq(list(self.message_entries), lambda w_, e: e.encode_into(w_))
        w.seq(list(self.finality_votes), lambda w_, v: v.encode_into(w_))
        w.seq(list(self.commands), lambda w_, c: c.encode_into(w_))

    def signing_payload(self) -> bytes:
        w = Writer()
        self._encode_body(w)
        return w.finish()

    def encode_into(self, w: Writer) -> None:
        self._encode_body(w)
        w.fixed(self.author_sig, SIGNATURE_SIZE)

    @classmethod
    def decode_from(cls, r: Reader) -> "RelayBlock":
        number = r.u64()
        parent_hash = r.fixed(DIGEST_SIZE)
        author_index = r.u32()
        included = tuple(
            (CandidateReceipt.decode_from(r), r.blob()) for _ in range(r.u32())
        )
        message_entries = tuple(r.seq(RelayStoredEntry.decode_from))
        finality_votes = tuple(r.seq(Vote.decode_from))
        commands = tuple(r.seq(RelayCommand.decode_from))
        author_sig = r.fixed(SIGNATURE_SIZE)
        return cls(
            number, parent_hash, author_index, included, message_entries,
            finality_votes, commands, author_sig,
        )

    def hash(self) -> Hash:
        cached = getattr(self, "_cached_hash", None)
        if cached is None:
            cached = hash_blob(canonical_encode(self))
            object.__setattr__(self, "_cached_hash", cached)
        return cached


def bitmap_from_indices(indices: set[int], validator_count: int) -> bytes:
    out = bytearray((validator_count + 7) // 8)
    for i in indices:
        out[i // 8] |= 1 << (i % 8)
    return bytes(out)


def bitmap_indices(bitmap: bytes) -> set[int]:
    return {i for i in range(len(bitmap) * 8) if bitmap[i // 8] >> (i % 8) & 1}


# -- genesis -------------------------------------------------------------------


@dataclass(frozen=True)
class RelayGenesis:
    validators: tuple[AccountId, ...]
    config: SharedConfig = SharedConfig()

    @classmethod
    def from_json(cls, text: str) -> "RelayGenesis":
        data = json.loads(text)
        cfg = data.get("shared_config", {})
        mode = StorageMode[data.get("mode", cfg.get("mode", "HRMP")).upper()]
        return cls(
            validators=tuple(bytes.fromhex(v) for v in data["validators"]),
            config=SharedConfig(
                max_message_bytes=int(cfg.get("max_message_bytes", 65536)),
                channel_capacity=int(cfg.get("channel_capacity", 16)),
                slot_duration_ticks=int(cfg.get("slot_duration_ticks", 10)),
                mode=mode,
                routing_per_block=int(cfg.get("routing_per_block", 64)),
            ),
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "validators": [v.hex() for v in self.validators],
                "mode": self.config.mode.name,
                "shared_config": {
                    "max_message_bytes": self.config.max_message_bytes,
                    "channel_capacity": self.config.channel_capacity,
                    "slot_duration_ticks": self.config.slot_duration_ticks,
                    "routing_per_block": self.config.routing_per_block,
                },
            },
            indent=2,
        )


# -- registry and paras ---------------------------------------------------------


@dataclass
class ParaRecord:
    para_id: int
    org_id: str
    head: ParaHeader
    genesis_head: ParaHeader
    code_hash: Hash
    collator: AccountId
    # inclusion history: (relay block number, receipt, attestation bitmap)
    history: list[tuple[int, CandidateReceipt, bytes]] = field(default_factory=list)


class ParaRegistry:
    """Hash map from organization ID to ParaId plus the retained set."""

    def __init__(self) -> None:
        self.entries: dict[str, int] = {}
        self.retained: set[int] = set()
        self.next_para_id = 1

    def register(self, org_id: str, validator_count: int) -> int:
        if org_id in self.entries:
            raise OrgAlreadyRegistered(org_id)
        if len(self.entries) + 1 + 1 > validator_count:
            raise CapacityExceeded(
                f"{len(self.entries) + 1} parachains need "
                f"{len(self.entries) + 2} validators, have {validator_count}"
            )
        para_id = self.next_para_id
        self.next_para_id += 1
        self.entries[org_id] = para_id
        return para_id

    def deregister(self, org_id: str) -> int:
        if org_id not in self.entries:
            raise UnknownOrg(org_id)
        para_id = self.entries.pop(org_id)
        self.retained.add(para_id)
        return para_id

    def para_of(self, org_id: str) -> int | None:
        return self.entries.get(org_id)

    def registered_paras(self) -> list[int]:
        return sorted(self.entries.values())


def schedule(validator_count: int, registered_paras: list[int], block_number: int) -> dict[int, tuple[int, ...]]:
    """Deterministic rotating validator assignment.

    Each registered para (sorted ascending, tie-break by ParaId) receives
    a window of ceil(2/3 * validators) consecutive validator indices
    starting at (block_number + para position) mod validators, so every
    para can reach the inclusion threshold from its assigned set alone
    and assignments rotate block to block whenever the window is a
    proper subset of the validator set.
    """
    if validator_count <= 0:
        raise NoValidators("schedule requires at least one validator")
    window = min(validator_count, max(1, supermajority(validator_count)))
    assignment: dict[int, tuple[int, ...]] = {}
    for position, para_id in enumerate(sorted(registered_paras)):
        start = (block_number + position) % validator_count
        assignment[para_id] = tuple(
            sorted((start + k) % validator_count for k in range(window))
        )
    return assignment


# -- replayed relay state --------------------------------------------------------


@dataclass
class AppliedEvent:
    """Trace record produced while applying a relay block."""

    kind: str
    detail: dict


class RelayState:
    """Deterministic state replayed identically by every validator from
    the relay block sequence."""

    def __init__(self, genesis: RelayGenesis):
        genesis.config.validate()
        self.validators = tuple(
            Validator(account=a, index=i) for i, a in enumerate(genesis.validators)
        )
        self.config = genesis.config
        self.registry = ParaRegistry()
        self.paras: dict[int, ParaRecord] = {}
        self.channels = ChannelRegistry()
        self.flagged: set[int] = set()  # validator indices excluded from assignment
        self.overturned: set[Hash] = set()
        self.command_failures: list[tuple[CommandKind, str]] = []

    @property
    def validator_count(self) -> int:
        return len(self.validators)

    def validator_index(self, account: AccountId) -> int | None:
        for v in self.validators:
            if v.account == account:
                return v.index
        return None

    def active_validator_indices(self) -> list[int]:
        return [v.index for v in self.validators if v.index not in self.flagged]

    def threshold(self) -> int:
        return supermajority(self.validator_count)

    def slot_author(self, slot: int) -> int:
        return slot % self.validator_count

    # -- registry operations (direct or via commands) ----------------------

    def register_parachain(
        self, org_id: str, genesis_head: ParaHeader, code_hash: Hash, collator: AccountId
    ) -> int:
        para_id = self.registry.register(org_id, self.validator_count)
        head = (
            replace(genesis_head, para_id=para_id)
            if genesis_head.para_id != para_id
            else genesis_head
        )
        self.paras[para_id] = ParaRecord(
            para_id=para_id,
            org_id=org_id,
            head=head,
            genesis_head=head,
            code_hash=code_hash,
            collator=collator,
        )
        return para_id

    def deregister_parachain(self, org_id: str) -> int:
        para_id = self.registry.deregister(org_id)
        self.channels.close_for_para(para_id)
        # The ParaRecord stays: the chain itself is untouched and its
        # history remains locally queryable; only candidacy ends.
        return para_id

    def is_registered(self, para_id: int) -> bool:
        return para_id in self.registry.entries.values()

    # -- block application ---------------------------------------------------

    def apply_command(self, command: RelayCommand) -> AppliedEvent | None:
        try:
            if command.kind == CommandKind.REGISTER_PARA:
                head = command.genesis_head
                if command.genesis_state:
                    # the relay allocates the ParaId, then fixes it into the
                    # submitted genesis state before committing the head
                    from freshnet.core.codec import canonical_decode
                    from freshnet.parachain import genesis_header

                    store = canonical_decode(StateStore, command.genesis_state)
                    para_id = self.registry.register(command.org_id, self.validator_count)
                    store.set(b"system/para_id", para_id.to_bytes(8, "little"))
                    head = genesis_header(store)
                    self.paras[para_id] = ParaRecord(
                        para_id=para_id,
                        org_id=command.org_id,
                        head=head,
                        genesis_head=head,
                        code_hash=command.code_hash,
                        collator=command.collator,
                    )
                    return AppliedEvent(
                        "para_registered", {"org": command.org_id, "para": para_id}
                    )
                if head is None:
                    raise ConfigInvalid("register needs a genesis head or state")
                para_id = self.register_parachain(
                    command.org_id, head, command.code_hash, command.collator
                )
                return AppliedEvent("para_registered", {"org": command.org_id, "para": para_id})
            if command.kind == CommandKind.DEREGISTER_PARA:
                para_id = self.deregister_parachain(command.org_id)
                return AppliedEvent("para_deregistered", {"org": command.org_id, "para": para_id})
            if command.kind == CommandKind.OPEN_CHANNEL:
                if not (self.is_registered(command.channel.sender) and self.is_registered(command.channel.receiver)):
                    raise NotRegistered(command.channel.label())
                self.channels.request(
                    command.channel.sender,
                    command.channel.receiver,
                    self.config.channel_capacity,
                    self.config.max_message_bytes,
                )
                return AppliedEvent("channel_requested", {"channel": command.channel.label()})
            if command.kind == CommandKind.ACCEPT_CHANNEL:
                self.channels.accept(command.channel)
                return AppliedEvent("channel_open", {"channel": command.channel.label()})
            if command.kind == CommandKind.SET_CONFIG:
                if command.config is None:
                    raise ConfigInvalid("set-config needs a config")
                command.config.validate()
                self.config = command.config
                return AppliedEvent("config_changed", {})
            if command.kind == CommandKind.RESOLVE_DISPUTE:
                return self._apply_dispute(command)
        except Exception as exc:
            reason = getattr(exc, "code", exc.__class__.__name__)
            self.command_failures.append((command.kind, reason))
            return AppliedEvent("command_rejected", {"kind": command.kind.name, "reason": reason})
        return None

    def _apply_dispute(self, command: RelayCommand) -> AppliedEvent:
        valid_votes = [v for v in command.dispute_votes if v.verify() and v.receipt_hash == command.receipt_hash]
        voters = {}
        for vote in valid_votes:
            idx = self.validator_index(vote.voter)
            if idx is not None:
                voters[idx] = vote.claim_invalid
        invalid_count = sum(1 for c in voters.values() if c)
        valid_count = sum(1 for c in voters.values() if not c)
        threshold = self.threshold()
        record, entry_pos = self._find_receipt(command.receipt_hash)
        if record is None:
            raise UnknownReceipt(command.receipt_hash.hex())
        if invalid_count >= threshold:
            overturned = record.history[entry_pos:]
            record.history = record.history[:entry_pos]
            record.head = (
                record.history[-1][1].para_header if record.history else record.genesis_head
            )
            for _, receipt, bitmap in overturned:
                self.overturned.add(receipt.hash())
                self.flagged.update(bitmap_indices(bitmap))
            return AppliedEvent(
                "dispute_overturned",
                {
                    "para": record.para_id,
                    "reverted_to": record.head.number,
                    "overturned": [r.hash().hex() for _, r, _ in overturned],
                },
            )
        if valid_count >= threshold:
            for vote in valid_votes:
                if vote.claim_invalid:
                    idx = self.validator_index(vote.voter)
                    if idx is not None:
                        self.flagged.add(idx)
            return AppliedEvent("dispute_upheld", {"para": record.para_id})
        raise ConfigInvalid("dispute resolution lacks a supermajority either way")

    def _find_receipt(self, receipt_hash: Hash) -> tuple[ParaRecord | None, int]:
        for record in self.paras.values():
            for pos, (_, receipt, _) in enumerate(record.history):
                if receipt.hash() == receipt_hash:
                    return record, pos
        return None, -1

    def apply_inclusion(self, relay_number: int, receipt: CandidateReceipt, bitmap: bytes) -> AppliedEvent:
        para_id = receipt.para_header.para_id
        record = self.paras.get(para_id)
        if record is None or not self.is_registered(para_id):
            return AppliedEvent("inclusion_rejected", {"para": para_id, "reason": "NotRegistered"})
        if receipt.para_header.parent_hash != record.head.hash():
            return AppliedEvent("inclusion_rejected", {"para": para_id, "reason": "RootMismatch"})
        if len(bitmap_indices(bitmap)) < self.threshold():
            return AppliedEvent("inclusion_rejected", {"para": para_id, "reason": "BelowThreshold"})
        record.head = receipt.para_header
        record.history.append((relay_number, receipt, bitmap))
        return AppliedEvent(
            "included",
            {"para": para_id, "number": receipt.para_header.number, "receipt": receipt.hash().hex()},
        )

    def apply_block(self, block: RelayBlock) -> list[AppliedEvent]:
        events = []
        for receipt, bitmap in block.included:
            events.append(self.apply_inclusion(block.number, receipt, bitmap))
        for command in block.commands:
            event = self.apply_command(command)
            if event is not None:
                events.append(event)
        return events


# -- candidate validation ----------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: str | None = None


def validate_candidate(
    state: RelayState,
    receipt: CandidateReceipt,
    parablock: ParaBlock,
    parent_state: StateStore,
    expected_code_hash: Hash,
) -> Verdict:
    """Re-execute the parablock and check collator identity, code hash,
    and every transacting party (signature + rbac admissibility are both
    re-checked inside execute_block)."""
    para_id = receipt.para_header.para_id
    record = state.paras.get(para_id)
    if record is None or not state.is_registered(para_id):
        return Verdict(False, "NotRegistered")
    if receipt.validation_code_hash != expected_code_hash or record.code_hash != expected_code_hash:
        return Verdict(False, "CodeHashMismatch")
    if not verify(record.collator, canonical_encode(receipt.para_header), receipt.collator_sig):
        return Verdict(False, "BadCollatorSig")
    if parablock.header != receipt.para_header:
        return Verdict(False, "RootMismatch")
    if receipt.para_header.parent_hash != record.head.hash():
        return Verdict(False, "RootMismatch")
    result = execute_block(parent_state, parablock)
    if not result.ok:
        reason = "BadIdentity" if result.reason in ("BadIdentity", "StaleNonce") else result.reason
        return Verdict(False, reason)
    return Verdict(True)


# -- message routing -----------------------------------------------------------------


@dataclass
class ReadyMessage:
    """A finalized outbound message waiting to be routed."""

    entry: RelayStoredEntry


def build_ready_messages(
    mode: StorageMode, header: ParaHeader, outbound: tuple[XcmMessage, ...] | list[XcmMessage]
) -> list[ReadyMessage]:
    """Turn a finalized parablock's outbound list into routable entries,
    attaching each message's proof of postage."""
    if not outbound:
        return []
    leaves = [m.leaf_bytes() for m in outbound]
    proofs = prove_all(leaves)
    ready = []
    for message, leaf, proof in zip(outbound, leaves, proofs):
        ready.append(
            ReadyMessage(
                RelayStoredEntry(
                    channel=message.channel,
                    seq_no=message.seq_no,
                    mode=mode,
                    payload=leaf if mode == StorageMode.HRMP else b"",
                    payload_ref=hash_blob(leaf),
                    postage_root=header.outbound_root,
                    proof=proof,
                    origin_para=header.para_id,
                    origin_block=header.number,
                )
            )
        )
    return ready


class RoutingQueues:
    """Per-channel FIFO of ready messages, drained round-robin for
    fairness: per relay block, channel shares differ by at most one."""

    def __init__(self) -> None:
        self.queues: dict[ChannelId, deque[ReadyMessage]] = {}
        self.cursor = 0

    def enqueue(self, ready: ReadyMessage) -> None:
        self.queues.setdefault(ready.entry.channel, deque()).append(ready)

    def pending_counts(self) -> dict[ChannelId, int]:
        return {cid: len(q) for cid, q in self.queues.items() if q}

    def drain_round_robin(self, limit: int) -> list[RelayStoredEntry]:
        """Up to *limit* entries, one per live channel per round, so the
        per-block share of any two still-pending channels differs by at
        most one.  The starting channel rotates block to block."""
        entries: list[RelayStoredEntry] = []
        while len(entries) < limit:
            live = sorted(cid for cid, q in self.queues.items() if q)
            if not live:
                break
            start = self.cursor % len(live)
            took_any = False
            for i in range(len(live)):
                if len(entries) >= limit:
                    break
                queue = self.queues[live[(start + i) % len(live)]]
                if queue:
                    entries.append(queue.popleft().entry)
                    took_any = True
            if not took_any:
                break
        self.cursor += 1
        return entries


# -- finality ---------------------------------------------------------------------


class FinalityTracker:
    """Counts distinct-voter endorsements; a vote for a block counts for
    all its ancestors.  Voting twice at one height discards both votes
    (the height is voided for that voter) and flags the voter.

    Support sets are maintained incrementally: a vote walks the ancestor
    chain adding its voter, stopping early once the voter is already
    present.  The rare equivocation path triggers a full rebuild.
    """

    def __init__(self, validator_count: int, accounts: tuple[AccountId, ...]):
        self.validator_count = validator_count
        self.accounts = {account: index for index, account in enumerate(accounts)}
        self.blocks: dict[Hash, tuple[int, Hash]] = {}  # hash -> (number, parent)
        self.votes: dict[int, dict[int, Hash]] = {}  # height -> voter index -> hash
        self.voided: set[tuple[int, int]] = set()  # (height, voter) pairs discarded
        self.equivocators: set[int] = set()
        self.cumulative: dict[Hash, set[int]] = {}
        self.finalized: set[Hash] = set()
        self.finalized_head: tuple[int, Hash] | None = None

    def add_block(self, block_hash: Hash, number: int, parent_hash: Hash) -> None:
        if block_hash not in self.blocks:
            self.blocks[block_hash] = (number, parent_hash)
            self.cumulative[block_hash] = set()

    def threshold(self) -> int:
        return supermajority(self.validator_count)

    def add_vote(self, vote: Vote) -> list[Hash]:
        """Record a vote; returns newly finalized block hashes, lowest
        first.  Unknown voters, bad signatures, votes for unknown blocks,
        and voided heights are ignored."""
        voter = self.accounts.get(vote.voter)
        if voter is None or vote.block_hash not in self.blocks or not vote.verify():
            return []
        if (vote.number, voter) in self.voided:
            return []
        if self.blocks[vote.block_hash][0] != vote.number:
            return []
        height_votes = self.votes.setdefault(vote.number, {})
        previous = height_votes.get(voter)
        if previous == vote.block_hash:
            return []
        if previous is not None:
            # equivocation: discard both votes, void the height, flag
            del height_votes[voter]
            self.voided.add((vote.number, voter))
            self.equivocators.add(voter)
            self._rebuild_cumulative()
            return []
        height_votes[voter] = vote.block_hash
        return self._credit(vote.block_hash, voter)

    def _credit(self, block_hash: Hash, voter: int) -> list[Hash]:
        """Add the voter along the ancestor chain; early-exit when seen."""
        newly = []
        threshold = self.threshold()
        cursor = block_hash
        while cursor in self.blocks:
            supporters = self.cumulative[cursor]
            if voter in supporters:
                break
            supporters.add(voter)
            if len(supporters) >= threshold and cursor not in self.finalized:
                self.finalized.add(cursor)
                newly.append(cursor)
                number = self.blocks[cursor][0]
                if self.finalized_head is None or number > self.finalized_head[0]:
                    self.finalized_head = (number, cursor)
            cursor = self.blocks[cursor][1]
        return list(reversed(newly))

    def _rebuild_cumulative(self) -> None:
        self.cumulative = {h: set() for h in self.blocks}
        for per_voter in self.votes.values():
            for voter, voted_hash in per_voter.items():
                cursor = voted_hash
                while cursor in self.blocks:
                    supporters = self.cumulative[cursor]
                    if voter in supporters:
                        break
                    supporters.add(voter)
                    cursor = self.blocks[cursor][1]
        # finality is irreversible; already-finalized blocks stay final

    def supporters(self, block_hash: Hash) -> set[int]:
        return set(self.cumulative.get(block_hash, set()))

    def is_finalized(self, block_hash: Hash) -> bool:
        return block_hash in self.finalized

    def _is_ancestor_or_equal(self, ancestor: Hash, descendant: Hash) -> bool:
        ancestor_number = self.blocks[ancestor][0]
        cursor = descendant
        while cursor in self.blocks and self.blocks[cursor][0] >= ancestor_number:
            if cursor == ancestor:
                return True
            cursor = self.blocks[cursor][1]
        return False

    def conflicting_finalized_pair(self) -> tuple[Hash, Hash] | None:
        """Safety probe: two finalized blocks where neither is an
        ancestor of the other (None when safe)."""
        final = sorted(self.finalized, key=lambda h: self.blocks[h][0])
        for i in range(len(final)):
            for j in range(i + 1, len(final)):
                if not self._is_ancestor_or_equal(final[i], final[j]):
                    return (final[i], final[j])
        return None


__all__ = [
    "AppliedEvent",
    "CandidateReceipt",
    "CommandKind",
    "DisputeVote",
    "FinalityTracker",
    "INCLUSION_TIMEOUT_BLOCKS",
    "ParaRecord",
    "ParaRegistry",
    "ReadyMessage",
    "RelayBlock",
    "RelayCommand",
    "RelayGenesis",
    "RelayState",
    "RoutingQueues",
    "SharedConfig",
    "Validator",
    "Verdict",
    "Vote",
    "bitmap_from_indices",
    "bitmap_indices",
    "build_ready_messages",
    "make_dispute_vote",
    "make_vote",
    "schedule",
    "sign_receipt",
    "supermajority",
    "validate_candidate",
]
