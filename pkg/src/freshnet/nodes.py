"""Validator and collator node logic, independent of transport.

Each node is a reactor: ``on_slot`` and ``on_message`` consume events
and return outgoing wire messages as (destination, message) pairs, with
``None`` meaning broadcast.  The deterministic simulator and the live
websocket service drive the same classes.

Validator pipeline: candidates arrive with full bodies; assigned
validators re-execute and attest; the slot author includes candidates
with a supermajority of attestations, routes finalized cross-chain
messages round-robin, embeds finality votes, and carries governance
commands.  Every validator votes once per height for the first block it
imports there; finality needs a supermajority of distinct voters.
Secondary checks re-validate included candidates and raise disputes.

Collator pipeline: author a parablock every slot, submit candidates in
inclusion order (resubmitting on timeout), follow the relay chain for
finality, mirror finalized relay facts into chain state as inherents,
deliver inbound messages after postage and finalized-origin checks
(fetching payload bytes by hash in XCMP mode), and run the off-chain
worker after imports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from freshnet.core import StateStore
from freshnet.core.codec import canonical_encode
from freshnet.core.hashing import Hash
from freshnet.core.keys import Keypair, verify
from freshnet.errors import NotSlotAuthor
from freshnet.ocw import OffchainWorker
from freshnet.parachain import (
    VALIDATION_CODE_HASH,
    ParaBlock,
    Parachain,
    RelayUpdate,
    RelayUpdateKind,
    execute_block,
)
from freshnet.protocol import (
    Attestation,
    WireKind,
    WireMessage,
    attestation_msg,
    candidate_msg,
    command_msg,
    dispute_msg,
    fetch_request_msg,
    fetch_response_msg,
    relay_block_msg,
    sync_request_msg,
    sync_response_msg,
    vote_msg,
)
from freshnet.relay import (
    INCLUSION_TIMEOUT_BLOCKS,
    CandidateReceipt,
    CommandKind,
    DisputeVote,
    FinalityTracker,
    RelayBlock,
    RelayCommand,
    RelayGenesis,
    RelayState,
    RoutingQueues,
    SharedConfig,
    Vote,
    bitmap_from_indices,
    build_ready_messages,
    make_dispute_vote,
    make_vote,
    schedule,
    sign_receipt,
    validate_candidate,
)
from freshnet.xcm import (
    ChannelId,
    FetchRequest,
    FetchResponse,
    RelayStoredEntry,
    StorageMode,
    verify_postage,
)

Outgoing = tuple  # (dest node id | None for broadcast, WireMessage)
TraceFn = Callable[..., None]

FETCH_RETRY_SLOTS = 2
ZERO_HASH = b"\x00" * 32


def _no_trace(kind: str, **fields) -> None:
    return None


@dataclass
class BootstrapPara:
    """A parachain registered in relay genesis."""

    org_id: str
    para_id: int
    genesis_state: StateStore
    collator_account: bytes


class RelayFollower:
    """Shared relay-chain tracking: linear adoption, replayed relay
    state, finality, orphan sync, and the finalized-fact cursor."""

    def __init__(self, genesis: RelayGenesis, trace: TraceFn = _no_trace):
        self.relay_genesis = genesis
        self.state = RelayState(genesis)
        self.finality = FinalityTracker(len(genesis.validators), genesis.validators)
        self.relay_chain: list[RelayBlock] = []
        self.blocks_by_hash: dict[Hash, RelayBlock] = {}
        self.orphans: dict[Hash, list[RelayBlock]] = {}
        self.finalized_cursor = 0  # finalized relay blocks fully processed
        self.trace = trace
        self._seen_wire: set[bytes] = set()

    # -- hooks overridden by subclasses -------------------------------------

    def on_adopted(self, block: RelayBlock, events) -> list[Outgoing]:
        return []

    def on_finalized_block(self, block: RelayBlock) -> list[Outgoing]:
        return []

    def pre_apply(self, block: RelayBlock) -> list[Outgoing]:
        return []

    # -- chain handling -------------------------------------------------------

    @property
    def relay_head_number(self) -> int:
        return self.relay_chain[-1].number if self.relay_chain else 0

    def relay_head_hash(self) -> Hash:
        return self.relay_chain[-1].hash() if self.relay_chain else ZERO_HASH

    def _author_account(self, block: RelayBlock):
        if 0 <= block.author_index < len(self.relay_genesis.validators):
            return self.relay_genesis.validators[block.author_index]
        return None

    def import_relay_block(self, block: RelayBlock) -> list[Outgoing]:
        block_hash = block.hash()
        if block_hash in self.blocks_by_hash:
            return []
        author = self._author_account(block)
        if author is None or not verify(author, block.signing_payload(), block.author_sig):
            self.trace("relay_block_rejected", number=block.number, reason="BadAuthorSig")
            return []
        parent_known = block.parent_hash == ZERO_HASH or block.parent_hash in self.blocks_by_hash
        if not parent_known:
            self.orphans.setdefault(block.parent_hash, []).append(block)
            return [(None, sync_request_msg(0, block.parent_hash))]
        self.blocks_by_hash[block_hash] = block
        self.finality.add_block(block_hash, block.number, block.parent_hash)
        out: list[Outgoing] = []
        if block.number == self.relay_head_number + 1 and block.parent_hash == self.relay_head_hash():
            out.extend(self.pre_apply(block))
            events = self.state.apply_block(block)
            self.relay_chain.append(block)
            self.trace(
                "relay_imported",
                number=block.number,
                hash=block_hash.hex(),
                author=block.author_index,
            )
            out.extend(self.on_adopted(block, events))
        # votes embedded in any known block still count toward finality
        for vote in block.finality_votes:
            out.extend(self._feed_vote(vote))
        # adopt any orphans waiting on this block
        for waiting in self.orphans.pop(block_hash, []):
            out.extend(self.import_relay_block(waiting))
        return out

    def _feed_vote(self, vote: Vote) -> list[Outgoing]:
        newly = self.finality.add_vote(vote)
        out: list[Outgoing] = []
        if newly:
            out.extend(self._process_finalized())
        return out

    def _process_finalized(self) -> list[Outgoing]:
        """Walk the finalized prefix of the adopted chain in order."""
        out: list[Outgoing] = []
        while self.finalized_cursor < len(self.relay_chain):
            block = self.relay_chain[self.finalized_cursor]
            if not self.finality.is_finalized(block.hash()):
                break
            self.finalized_cursor += 1
            self.trace("relay_finalized", number=block.number, hash=block.hash().hex())
            out.extend(self.on_finalized_block(block))
        return out

    def handle_sync(self, message: WireMessage, sender: str) -> list[Outgoing]:
        if message.kind == WireKind.SYNC_REQUEST and message.sync_request.what == 0:
            block = self.blocks_by_hash.get(message.sync_request.ref)
            if block is not None:
                return [(sender, sync_response_msg(block))]
            return []
        if message.kind == WireKind.SYNC_RESPONSE:
            return self.import_relay_block(message.relay_block)
        return []


@dataclass
class PendingCandidate:
    receipt: CandidateReceipt
    block: ParaBlock
    first_seen_height: int
    attestors: set = field(default_factory=set)
    verdict: str | None = None  # my own validation outcome


class ValidatorNode(RelayFollower):
    """A relay-chain validator."""

    def __init__(
        self,
        node_id: str,
        keypair: Keypair,
        index: int,
        genesis: RelayGenesis,
        bootstrap: list[BootstrapPara] = (),
        bootstrap_channels: list[ChannelId] = (),
        trace: TraceFn = _no_trace,
    ):
        super().__init__(genesis, trace)
        self.node_id = node_id
        self.keypair = keypair
        self.index = index
        self.pending: dict[Hash, PendingCandidate] = {}
        self.early_attestations: dict[Hash, set[int]] = {}
        self.availability: dict[Hash, tuple[CandidateReceipt, ParaBlock]] = {}
        self.replicas: dict[int, StateStore] = {}
        self.replica_heights: dict[int, int] = {}
        self.voted_heights: set[int] = set()
        self.vote_pool: dict[tuple[int, int, Hash], Vote] = {}
        self.routing = RoutingQueues()
        self.routed_refs: dict[tuple[ChannelId, int], Hash] = {}
        self.enqueued_routing: set[tuple[ChannelId, int]] = set()
        self.dispute_votes: dict[Hash, dict[int, DisputeVote]] = {}
        self.my_dispute_verdicts: set[Hash] = set()
        self.resolved_disputes: set[Hash] = set()
        self.pending_commands: list[RelayCommand] = []
        self._seen_commands: set[bytes] = set()
        self._genesis_states: dict[int, StateStore] = {}
        # faults (driven by the simulator)
        self.blind_attest = False
        self.equivocate = False
        for para in bootstrap:
            self.state.register_parachain(
                para.org_id,
                _bootstrap_header(para),
                VALIDATION_CODE_HASH,
                para.collator_account,
            )
            self.replicas[para.para_id] = para.genesis_state.copy()
            self.replica_heights[para.para_id] = 0
            self._genesis_states[para.para_id] = para.genesis_state.copy()
        for cid in bootstrap_channels:
            self.state.channels.request(
                cid.sender, cid.receiver, genesis.config.channel_capacity, genesis.config.max_message_bytes
            )
            self.state.channels.accept(cid)

    # -- slots ------------------------------------------------------------

    def is_slot_author(self, slot: int) -> bool:
        return self.state.slot_author(slot) == self.index

    def on_slot(self, slot: int, tick: int = 0) -> list[Outgoing]:
        if not self.is_slot_author(slot):
            return []
        return self.author_relay_block(slot)

    def author_relay_block(self, slot: int) -> list[Outgoing]:
        """Produce and broadcast this slot's relay block.

        Raises NotSlotAuthor when called out of turn."""
        if not self.is_slot_author(slot):
            raise NotSlotAuthor(f"slot {slot} belongs to validator {self.state.slot_author(slot)}")
        number = self.relay_head_number + 1
        included = self._eligible_inclusions()
        pending_before = {c.label(): n for c, n in sorted(self.routing.pending_counts().items())}
        entries = tuple(self.routing.drain_round_robin(self.state.config.routing_per_block))
        votes = tuple(self._votes_to_embed())
        commands = tuple(self.pending_commands)
        self.pending_commands = []
        unsigned = RelayBlock(
            number=number,
            parent_hash=self.relay_head_hash(),
            author_index=self.index,
            included=included,
            message_entries=entries,
            finality_votes=votes,
            commands=commands,
            author_sig=b"\x00" * 64,
        )
        block = RelayBlock(
            number=number,
            parent_hash=unsigned.parent_hash,
            author_index=self.index,
            included=included,
            message_entries=entries,
            finality_votes=votes,
            commands=commands,
            author_sig=self.keypair.sign(unsigned.signing_payload()),
        )
        self.trace(
            "relay_authored",
            number=number,
            hash=block.hash().hex(),
            included=[
                [r.para_header.para_id, r.para_header.number, r.para_header.outbound_root.hex()]
                for r, _ in included
            ],
            routed=[[e.channel.label(), e.seq_no] for e in entries],
            pending_before=pending_before,
            commands=len(commands),
        )
        out: list[Outgoing] = []
        if self.equivocate:
            # produce a conflicting sibling in the same slot and split the
            # audience; also double-vote (the tracker must void both)
            twin_unsigned = RelayBlock(
                number=number,
                parent_hash=block.parent_hash,
                author_index=self.index,
                included=(),
                message_entries=(),
                finality_votes=(),
                commands=(),
                author_sig=b"\x00" * 64,
            )
            twin = RelayBlock(
                number=number,
                parent_hash=block.parent_hash,
                author_index=self.index,
                included=(),
                message_entries=(),
                finality_votes=(),
                commands=(),
                author_sig=self.keypair.sign(twin_unsigned.signing_payload()),
            )
            self.trace("relay_equivocated", number=number, a=block.hash().hex(), b=twin.hash().hex())
            out.append(("split:even", relay_block_msg(block)))
            out.append(("split:odd", relay_block_msg(twin)))
            out.extend(self.import_relay_block(block))
            vote_a = make_vote(self.keypair, block.hash(), number)
            vote_b = make_vote(self.keypair, twin.hash(), number)
            self.finality.add_block(twin.hash(), twin.number, twin.parent_hash)
            for v in (vote_a, vote_b):
                out.append((None, vote_msg(v)))
            return out
        out.append((None, relay_block_msg(block)))
        out.extend(self.import_relay_block(block))
        return out

    def _eligible_inclusions(self) -> tuple:
        threshold = self.state.threshold()
        rows = []
        for candidate_hash, pending in sorted(
            self.pending.items(), key=lambda kv: (kv[1].receipt.para_header.para_id, kv[0])
        ):
            receipt = pending.receipt
            record = self.state.paras.get(receipt.para_header.para_id)
            if record is None or not self.state.is_registered(receipt.para_header.para_id):
                continue
            if receipt.para_header.parent_hash != record.head.hash():
                continue
            if len(pending.attestors) >= threshold:
                rows.append((receipt, bitmap_from_indices(pending.attestors, self.state.validator_count)))
        return tuple(rows)

    def _votes_to_embed(self) -> list[Vote]:
        finalized_floor = self.finality.finalized_head[0] if self.finality.finalized_head else 0
        votes = [
            vote
            for (height, _voter, _h), vote in sorted(self.vote_pool.items(), key=lambda kv: kv[0][:2])
            if height > finalized_floor
        ]
        return votes[:128]

    # -- candidate handling --------------------------------------------------

    def _assigned(self, para_id: int, at_height: int) -> bool:
        registered = self.state.registry.registered_paras()
        if para_id not in registered:
            return False
        assignment = schedule(self.state.validator_count, registered, at_height)
        return self.index in assignment.get(para_id, ())

    def _validate_for_attestation(self, pending: PendingCandidate) -> bool:
        receipt = pending.receipt
        para_id = receipt.para_header.para_id
        replica = self.replicas.get(para_id)
        if replica is None:
            return False
        if self.blind_attest:
            pending.verdict = "blind"
            return True
        verdict = validate_candidate(self.state, receipt, pending.block, replica, VALIDATION_CODE_HASH)
        if verdict.valid:
            for message in pending.block.inbound:
                ref = self.routed_refs.get((message.channel, message.seq_no))
                if ref is None or ref != message.leaf_hash():
                    pending.verdict = "UnroutedInbound"
                    self.trace(
                        "candidate_invalid",
                        para=para_id,
                        number=receipt.para_header.number,
                        reason="UnroutedInbound",
                    )
                    return False
        pending.verdict = verdict.reason if not verdict.valid else "valid"
        if not verdict.valid:
            self.trace(
                "candidate_invalid",
                para=para_id,
                number=receipt.para_header.number,
                reason=verdict.reason,
            )
        return verdict.valid

    def _consider_attestation(self, candidate_hash: Hash) -> list[Outgoing]:
        pending = self.pending.get(candidate_hash)
        if pending is None or self.index in pending.attestors:
            return []
        para_id = pending.receipt.para_header.para_id
        if not self._assigned(para_id, self.relay_head_number + 1):
            return []
        if pending.verdict is None or pending.verdict == "blind":
            if not self._validate_for_attestation(pending):
                return []
        elif pending.verdict != "valid":
            return []
        attestation = make_attestation_for(self.keypair, candidate_hash)
        pending.attestors.add(self.index)
        self.trace(
            "attested",
            para=para_id,
            number=pending.receipt.para_header.number,
            candidate=candidate_hash.hex(),
        )
        return [(None, attestation_msg(attestation))]

    def _on_candidate(self, receipt: CandidateReceipt, block: ParaBlock) -> list[Outgoing]:
        candidate_hash = receipt.hash()
        self.availability[candidate_hash] = (receipt, block)
        if candidate_hash in self.pending:
            return []
        para_id = receipt.para_header.para_id
        record = self.state.paras.get(para_id)
        if record is None or not self.state.is_registered(para_id):
            self.trace("candidate_rejected", para=para_id, reason="NotRegistered")
            return []
        if receipt.para_header.number <= self.replica_heights.get(para_id, 0):
            return []  # already included at this height
        pending = PendingCandidate(
            receipt=receipt,
            block=block,
            first_seen_height=self.relay_head_number,
            attestors=self.early_attestations.pop(candidate_hash, set()),
        )
        self.pending[candidate_hash] = pending
        return self._consider_attestation(candidate_hash)

    def _on_attestation(self, attestation: Attestation) -> list[Outgoing]:
        if not attestation.verify():
            return []
        voter = self.state.validator_index(attestation.validator)
        if voter is None:
            return []
        pending = self.pending.get(attestation.candidate_hash)
        if pending is None:
            self.early_attestations.setdefault(attestation.candidate_hash, set()).add(voter)
            return []
        pending.attestors.add(voter)
        return []

    # -- adoption side effects -------------------------------------------------

    def pre_apply(self, block: RelayBlock) -> list[Outgoing]:
        """Secondary checks and replica advancement, before the registry
        records the new heads."""
        out: list[Outgoing] = []
        for receipt, _bitmap in block.included:
            para_id = receipt.para_header.para_id
            candidate_hash = receipt.hash()
            record = self.state.paras.get(para_id)
            if record is None:
                continue
            held = self.availability.get(candidate_hash)
            replica = self.replicas.get(para_id)
            if held is None or replica is None:
                out.append((None, sync_request_msg(1, candidate_hash)))
                continue
            verdict = validate_candidate(self.state, receipt, held[1], replica, VALIDATION_CODE_HASH)
            if verdict.valid:
                result = execute_block(replica, held[1])
                if result.ok:
                    self.replicas[para_id] = result.state
                    self.replica_heights[para_id] = receipt.para_header.number
                    continue
                verdict_reason = result.reason
            else:
                verdict_reason = verdict.reason
            if self.blind_attest:
                continue  # faulty validator: looks away instead of disputing
            # dispute: this inclusion does not re-validate
            if candidate_hash not in self.my_dispute_verdicts:
                self.my_dispute_verdicts.add(candidate_hash)
                dispute = make_dispute_vote(self.keypair, candidate_hash, claim_invalid=True)
                self._record_dispute_vote(dispute)
                self.trace(
                    "dispute_raised",
                    para=para_id,
                    number=receipt.para_header.number,
                    candidate=candidate_hash.hex(),
                    reason=verdict_reason,
                )
                out.append((None, dispute_msg(dispute)))
        return out

    def on_adopted(self, block: RelayBlock, events) -> list[Outgoing]:
        out: list[Outgoing] = []
        # record routed refs, prune routing queues
        for entry in block.message_entries:
            key = (entry.channel, entry.seq_no)
            self.routed_refs[key] = entry.payload_ref
            self.enqueued_routing.discard(key)
        pruned = set()
        for cid, queue in self.routing.queues.items():
            while queue and (cid, queue[0].entry.seq_no) in self.routed_refs:
                queue.popleft()
                pruned.add(cid)
        # drop included/timed-out candidates
        included_hashes = {receipt.hash() for receipt, _ in block.included}
        for candidate_hash in list(self.pending):
            pending = self.pending[candidate_hash]
            if candidate_hash in included_hashes:
                del self.pending[candidate_hash]
            elif block.number - pending.first_seen_height >= INCLUSION_TIMEOUT_BLOCKS:
                self.trace(
                    "candidate_dropped",
                    para=pending.receipt.para_header.para_id,
                    number=pending.receipt.para_header.number,
                )
                del self.pending[candidate_hash]
        # command bookkeeping + dispute reverts
        applied = {canonical_encode(c) for c in block.commands}
        self.pending_commands = [c for c in self.pending_commands if canonical_encode(c) not in applied]
        for command in block.commands:
            if command.kind == CommandKind.RESOLVE_DISPUTE:
                self.resolved_disputes.add(command.receipt_hash)
        for event in events:
            if event.kind == "dispute_overturned":
                self._rebuild_replica(event.detail["para"])
            elif event.kind == "para_registered":
                para_id = event.detail["para"]
                for command in block.commands:
                    if command.kind == CommandKind.REGISTER_PARA and command.org_id == event.detail["org"]:
                        if command.genesis_state:
                            from freshnet.core.codec import canonical_decode

                            store = canonical_decode(StateStore, command.genesis_state)
                            store.set(b"system/para_id", para_id.to_bytes(8, "little"))
                            self.replicas[para_id] = store
                            self._genesis_states[para_id] = store.copy()
                            self.replica_heights[para_id] = 0
            self.trace("relay_event", relay_kind=event.kind, **{
                k: v for k, v in event.detail.items() if k != "overturned"
            })
        # vote once per height for the first block imported there
        if block.number not in self.voted_heights:
            self.voted_heights.add(block.number)
            vote = make_vote(self.keypair, block.hash(), block.number)
            self.vote_pool[(block.number, self.index, block.hash())] = vote
            self.finality.add_vote(vote)
            self.trace("voted", number=block.number, hash=block.hash().hex())
            out.append((None, vote_msg(vote)))
            out.extend(self._process_finalized())
        # head movement can cure parent/routing races: retry invalid
        # verdicts, then reconsider attestation under the new rotation
        for pending in self.pending.values():
            if pending.verdict not in (None, "valid", "blind"):
                pending.verdict = None
        for candidate_hash in list(self.pending):
            out.extend(self._consider_attestation(candidate_hash))
        return out

    def _rebuild_replica(self, para_id: int) -> None:
        record = self.state.paras.get(para_id)
        if record is None:
            return
        boot = self._genesis_states.get(para_id)
        if boot is None:
            return
        state = boot.copy()
        height = 0
        for _, receipt, _ in record.history:
            held = self.availability.get(receipt.hash())
            if held is None:
                break
            result = execute_block(state, held[1])
            if not result.ok:
                break
            state = result.state
            height = receipt.para_header.number
        self.replicas[para_id] = state
        self.replica_heights[para_id] = height
        self.trace("replica_rebuilt", para=para_id, height=height)

    def on_finalized_block(self, block: RelayBlock) -> list[Outgoing]:
        """Feed finalized outbound messages into the routing queues."""
        for receipt, _bitmap in block.included:
            candidate_hash = receipt.hash()
            if candidate_hash in self.state.overturned:
                continue
            held = self.availability.get(candidate_hash)
            if held is None:
                continue
            header = receipt.para_header
            for ready in build_ready_messages(self.state.config.mode, header, held[1].outbound):
                key = (ready.entry.channel, ready.entry.seq_no)
                if key in self.routed_refs or key in self.enqueued_routing:
                    continue
                channel = self.state.channels.get(ready.entry.channel)
                if channel is None:
                    continue
                self.enqueued_routing.add(key)
                self.routing.enqueue(ready)
        return []

    # -- disputes ----------------------------------------------------------------

    def _record_dispute_vote(self, dispute: DisputeVote) -> None:
        voter = self.state.validator_index(dispute.voter)
        if voter is None:
            return
        self.dispute_votes.setdefault(dispute.receipt_hash, {})[voter] = dispute

    def _on_dispute_vote(self, dispute: DisputeVote) -> list[Outgoing]:
        if not dispute.verify():
            return []
        self._record_dispute_vote(dispute)
        out: list[Outgoing] = []
        receipt_hash = dispute.receipt_hash
        if receipt_hash not in self.my_dispute_verdicts:
            verdict_invalid = self._rerun_validation(receipt_hash)
            if verdict_invalid is not None:
                self.my_dispute_verdicts.add(receipt_hash)
                mine = make_dispute_vote(self.keypair, receipt_hash, claim_invalid=verdict_invalid)
                self._record_dispute_vote(mine)
                out.append((None, dispute_msg(mine)))
        self._maybe_queue_resolution(receipt_hash)
        return out

    def _rerun_validation(self, receipt_hash: Hash) -> bool | None:
        """Re-execute an included candidate from scratch; True = invalid."""
        record, pos = self.state._find_receipt(receipt_hash)
        if record is None:
            return None
        receipt = record.history[pos][1]
        held = self.availability.get(receipt_hash)
        boot = self._genesis_states.get(record.para_id)
        if held is None or boot is None:
            return None
        state = boot.copy()
        for _, earlier, _ in record.history[:pos]:
            earlier_held = self.availability.get(earlier.hash())
            if earlier_held is None:
                return None
            result = execute_block(state, earlier_held[1])
            if not result.ok:
                return True
            state = result.state
        result = execute_block(state, held[1])
        if not result.ok:
            return True
        return result.state.root() != receipt.para_header.state_root

    def _maybe_queue_resolution(self, receipt_hash: Hash) -> None:
        if receipt_hash in self.resolved_disputes:
            return
        votes = self.dispute_votes.get(receipt_hash, {})
        threshold = self.state.threshold()
        invalid = sum(1 for v in votes.values() if v.claim_invalid)
        valid = sum(1 for v in votes.values() if not v.claim_invalid)
        if max(invalid, valid) < threshold:
            return
        record, _ = self.state._find_receipt(receipt_hash)
        if record is None:
            return
        command = RelayCommand(
            kind=CommandKind.RESOLVE_DISPUTE,
            receipt_hash=receipt_hash,
            dispute_votes=tuple(votes[idx] for idx in sorted(votes)),
        )
        encoded = canonical_encode(command)
        if encoded not in self._seen_commands:
            self._seen_commands.add(encoded)
            self.pending_commands.append(command)

    # -- entry point --------------------------------------------------------------

    def on_message(self, message: WireMessage, sender: str = "") -> list[Outgoing]:
        if message.kind == WireKind.CANDIDATE:
            receipt, block = message.candidate
            return self._on_candidate(receipt, block)
        if message.kind == WireKind.ATTESTATION:
            return self._on_attestation(message.attestation)
        if message.kind == WireKind.RELAY_BLOCK:
            return self.import_relay_block(message.relay_block)
        if message.kind == WireKind.FINALITY_VOTE:
            vote = message.vote
            voter_index = self.state.validator_index(vote.voter)
            if voter_index is not None:
                self.vote_pool[(vote.number, voter_index, vote.block_hash)] = vote
            return self._feed_vote(vote)
        if message.kind == WireKind.DISPUTE_VOTE:
            return self._on_dispute_vote(message.dispute_vote)
        if message.kind == WireKind.COMMAND:
            encoded = canonical_encode(message.command)
            if encoded not in self._seen_commands:
                self._seen_commands.add(encoded)
                self.pending_commands.append(message.command)
            return []
        if message.kind in (WireKind.SYNC_REQUEST, WireKind.SYNC_RESPONSE):
            if message.kind == WireKind.SYNC_REQUEST and message.sync_request.what == 1:
                held = self.availability.get(message.sync_request.ref)
                if held is not None:
                    return [(sender, candidate_msg(held[0], held[1]))]
                return []
            return self.handle_sync(message, sender)
        return []


def make_attestation_for(keypair: Keypair, candidate_hash: Hash) -> Attestation:
    from freshnet.protocol import make_attestation

    return make_attestation(keypair, candidate_hash)


def _xt_trace_fields(xt) -> dict:
    """Flatten one extrinsic into audit-friendly trace fields."""
    from freshnet.core.codec import Reader
    from freshnet.pallets import (
        HandoffArgs,
        RegisterProductArgs,
        RegisterShipmentArgs,
        SubmitReadingArgs,
        TrackArgs,
    )
    from freshnet.rbac import RoleChangeArgs

    row = {
        "signer": xt.signer.hex(),
        "pallet": xt.target_pallet,
        "call": xt.call,
        "nonce": xt.nonce,
    }
    try:
        if xt.target_pallet == "rbac" and xt.call in ("assign_role", "revoke_role"):
            change = RoleChangeArgs.decode_from(Reader(xt.args))
            row["role_change"] = [change.target.hex(), change.pallet, change.permission.label()]
        elif xt.target_pallet == "tracking" and xt.call == "track_shipment":
            args = TrackArgs.decode_from(Reader(xt.args))
            row["track"] = [args.shipment_id, args.kind.name.capitalize()]
        elif xt.target_pallet == "sensing" and xt.call == "submit_reading":
            args = SubmitReadingArgs.decode_from(Reader(xt.args))
            row["track"] = [args.shipment_id, "Scan"]
        elif xt.target_pallet == "shipments" and xt.call == "register_shipment":
            args = RegisterShipmentArgs.decode_from(Reader(xt.args))
            row["shipment"] = [args.shipment_id, args.dest_org]
        elif xt.target_pallet == "shipments" and xt.call == "handoff":
            args = HandoffArgs.decode_from(Reader(xt.args))
            row["handoff"] = args.shipment_id
        elif xt.target_pallet == "products" and xt.call == "register_product":
            args = RegisterProductArgs.decode_from(Reader(xt.args))
            row["product"] = args.product_id
    except Exception:
        pass
    return row


def _bootstrap_header(para: BootstrapPara):
    from freshnet.parachain import genesis_header

    return genesis_header(para.genesis_state)


@dataclass
class PendingFetch:
    entry: RelayStoredEntry
    last_request_slot: int


class CollatorNode(RelayFollower):
    """The organization's node: authors parablocks and bridges the relay."""

    def __init__(
        self,
        node_id: str,
        chain: Parachain,
        genesis: RelayGenesis,
        worker: OffchainWorker | None = None,
        bootstrap: list[BootstrapPara] = (),
        bootstrap_channels: list[ChannelId] = (),
        trace: TraceFn = _no_trace,
    ):
        super().__init__(genesis, trace)
        self.node_id = node_id
        self.chain = chain
        self.para_id = chain.para_id
        self.worker = worker
        for para in bootstrap:
            self.state.register_parachain(
                para.org_id,
                _bootstrap_header(para),
                VALIDATION_CODE_HASH,
                para.collator_account,
            )
        for cid in bootstrap_channels:
            self.state.channels.request(
                cid.sender, cid.receiver, genesis.config.channel_capacity, genesis.config.max_message_bytes
            )
            self.state.channels.accept(cid)
        self.receipts: dict[Hash, tuple[CandidateReceipt, ParaBlock]] = {}
        self.included_number = 0
        self.last_submitted_number = 0
        self.last_submit_height = 0
        self.pending_fetches: dict[tuple[ChannelId, int], PendingFetch] = {}
        self.seen_entries: set[tuple[ChannelId, int]] = set()
        self.held_entries: list[RelayStoredEntry] = []
        # (para, number) -> outbound_root of finalized sender headers
        self.finalized_outbound_roots: dict[tuple[int, int], Hash] = {}
        self.finalized_head_hashes: dict[tuple[int, int], Hash] = {}
        self.finalized_config: SharedConfig = genesis.config
        self.corrupt_candidates = False  # fault hook
        self._corrupt_parent: Hash | None = None

    # -- slots ---------------------------------------------------------------

    def on_slot(self, slot: int, tick: int = 0) -> list[Outgoing]:
        out: list[Outgoing] = []
        block = self.chain.author_parablock()
        receipt = sign_receipt(self.chain.collator, block.header, VALIDATION_CODE_HASH)
        self.receipts[receipt.hash()] = (receipt, block)
        self.trace(
            "para_authored",
            para=self.para_id,
            number=block.header.number,
            hash=block.header.hash().hex(),
            state_root=block.header.state_root.hex(),
            extrinsics=[_xt_trace_fields(x) for x in block.extrinsics],
            outbound=[[m.channel.label(), m.seq_no] for m in block.outbound],
            inbound=[[m.channel.label(), m.seq_no] for m in block.inbound],
        )
        out.extend(self._submit_next_candidate())
        out.extend(self._retry_fetches(slot))
        return out

    def run_worker(self, tick: int) -> None:
        if self.worker is not None:
            self.worker.run(self.chain, tick)
            report = self.worker.reports[-1]
            self.trace("ocw_report", **report)

    def _submit_next_candidate(self) -> list[Outgoing]:
        if not self.state.is_registered(self.para_id):
            return []
        target_number = self.included_number + 1
        if target_number > self.chain.head.number:
            return []
        recently_submitted = (
            self.last_submitted_number == target_number
            and self.relay_head_number - self.last_submit_height < INCLUSION_TIMEOUT_BLOCKS
        )
        if recently_submitted:
            return []
        block = self.chain.blocks[target_number - 1]
        header = block.header
        if self.corrupt_candidates:
            parent = self._corrupt_parent if self._corrupt_parent is not None else header.parent_hash
            from dataclasses import replace as dc_replace

            header = dc_replace(
                header,
                parent_hash=parent,
                state_root=bytes(b ^ 0xFF for b in header.state_root),
            )
            block = ParaBlock(
                header=header,
                extrinsics=block.extrinsics,
                outbound=block.outbound,
                inbound=block.inbound,
                relay_updates=block.relay_updates,
            )
            self._corrupt_parent = header.hash()
        receipt = sign_receipt(self.chain.collator, header, VALIDATION_CODE_HASH)
        self.receipts[receipt.hash()] = (receipt, block)
        self.last_submitted_number = target_number
        self.last_submit_height = self.relay_head_number
        self.trace(
            "candidate_submitted",
            para=self.para_id,
            number=header.number,
            candidate=receipt.hash().hex(),
            corrupt=self.corrupt_candidates,
        )
        return [(None, candidate_msg(receipt, block))]

    def _retry_fetches(self, slot: int) -> list[Outgoing]:
        out: list[Outgoing] = []
        for key, pending in self.pending_fetches.items():
            if slot - pending.last_request_slot >= FETCH_RETRY_SLOTS:
                pending.last_request_slot = slot
                out.append(self._fetch_request(pending.entry))
        return out

    def _fetch_request(self, entry: RelayStoredEntry) -> Outgoing:
        request = FetchRequest(entry.channel, entry.seq_no, entry.payload_ref)
        self.trace("fetch_requested", channel=entry.channel.label(), seq=entry.seq_no)
        return (f"para:{entry.channel.sender}", fetch_request_msg(request))

    # -- relay following -------------------------------------------------------

    def on_adopted(self, block: RelayBlock, events) -> list[Outgoing]:
        advanced = False
        for event in events:
            if event.kind == "included" and event.detail.get("para") == self.para_id:
                self.included_number = max(self.included_number, event.detail["number"])
                advanced = True
            if event.kind == "dispute_overturned" and event.detail.get("para") == self.para_id:
                self.included_number = event.detail["reverted_to"]
                self.last_submitted_number = 0
                advanced = True
        # keep the inclusion pipeline at one candidate per relay block
        return self._submit_next_candidate() if advanced else []

    def on_finalized_block(self, block: RelayBlock) -> list[Outgoing]:
        out: list[Outgoing] = []
        for receipt, _bitmap in block.included:
            header = receipt.para_header
            if receipt.hash() in self.state.overturned:
                continue
            self.finalized_outbound_roots[(header.para_id, header.number)] = header.outbound_root
            self.finalized_head_hashes[(header.para_id, header.number)] = header.hash()
        for command in block.commands:
            self._apply_finalized_command(command)
        for entry in block.message_entries:
            out.extend(self._on_routed_entry(entry))
        # anything held for origin finality may be ready now
        held, self.held_entries = self.held_entries, []
        for entry in held:
            out.extend(self._on_routed_entry(entry, retried=True))
        return out

    def _apply_finalized_command(self, command: RelayCommand) -> None:
        if command.kind == CommandKind.SET_CONFIG and command.config is not None:
            self.finalized_config = command.config
        elif command.kind == CommandKind.REGISTER_PARA:
            para_id = self.state.registry.para_of(command.org_id)
            if para_id is not None:
                self.chain.queue_relay_update(
                    RelayUpdate(
                        kind=RelayUpdateKind.ORG_REGISTERED,
                        org_id=command.org_id,
                        para_id=para_id,
                    )
                )
        elif command.kind == CommandKind.DEREGISTER_PARA:
            self.chain.queue_relay_update(
                RelayUpdate(kind=RelayUpdateKind.ORG_DEREGISTERED, org_id=command.org_id)
            )
        elif command.kind == CommandKind.ACCEPT_CHANNEL:
            cid = command.channel
            if self.para_id in (cid.sender, cid.receiver):
                self.chain.queue_relay_update(
                    RelayUpdate(
                        kind=RelayUpdateKind.CHANNEL_OPENED,
                        channel=cid,
                        capacity=self.finalized_config.channel_capacity,
                        max_message_bytes=self.finalized_config.max_message_bytes,
                    )
                )

    def _on_routed_entry(self, entry: RelayStoredEntry, retried: bool = False) -> list[Outgoing]:
        cid = entry.channel
        if cid.sender == self.para_id:
            self.chain.queue_relay_update(
                RelayUpdate(kind=RelayUpdateKind.ROUTED, channel=cid, seq_no=entry.seq_no)
            )
            return []
        if cid.receiver != self.para_id:
            return []
        key = (cid, entry.seq_no)
        if key in self.seen_entries:
            return []
        expected_root = self.finalized_outbound_roots.get((entry.origin_para, entry.origin_block))
        if expected_root is None or expected_root != entry.postage_root:
            if retried:
                self.trace(
                    "entry_rejected",
                    channel=cid.label(),
                    seq=entry.seq_no,
                    reason="NotFinalizedOrigin",
                )
                return []
            self.held_entries.append(entry)
            return []
        self.seen_entries.add(key)
        if entry.mode == StorageMode.HRMP:
            return self._accept_payload(entry, entry.payload)
        pending = PendingFetch(entry=entry, last_request_slot=0)
        self.pending_fetches[key] = pending
        return [self._fetch_request(entry)]

    def _accept_payload(self, entry: RelayStoredEntry, leaf_bytes: bytes) -> list[Outgoing]:
        from freshnet.core.codec import canonical_decode
        from freshnet.xcm import MessageKind as MessageKindAlias
        from freshnet.xcm import XcmMessage

        if not verify_postage(entry, leaf_bytes):
            self.seen_entries.discard((entry.channel, entry.seq_no))
            self.trace(
                "entry_rejected",
                channel=entry.channel.label(),
                seq=entry.seq_no,
                reason="PostageProofInvalid",
            )
            return []
        try:
            message = canonical_decode(XcmMessage, leaf_bytes)
        except Exception:
            self.trace(
                "entry_rejected",
                channel=entry.channel.label(),
                seq=entry.seq_no,
                reason="PostageProofInvalid",
            )
            return []
        if message.channel != entry.channel or message.seq_no != entry.seq_no:
            self.trace(
                "entry_rejected",
                channel=entry.channel.label(),
                seq=entry.seq_no,
                reason="PostageProofInvalid",
            )
            return []
        self.chain.stage_inbound(message)
        fields = dict(
            channel=entry.channel.label(),
            seq=entry.seq_no,
            msg_kind=int(message.kind),
            postage_root=entry.postage_root.hex(),
            origin_para=entry.origin_para,
            origin_block=entry.origin_block,
        )
        if message.kind == MessageKindAlias.SHIPMENT_HANDOFF:
            try:
                from freshnet.pallets import ShipmentHandoffPayload

                record = canonical_decode(ShipmentHandoffPayload, message.payload)
                fields["shipment"] = record.shipment.shipment_id
                fields["origin_status"] = int(record.shipment.status)
            except Exception:
                pass
        self.trace("entry_delivered", **fields)
        return []

    # -- entry point --------------------------------------------------------------

    def on_message(self, message: WireMessage, sender: str = "") -> list[Outgoing]:
        if message.kind == WireKind.RELAY_BLOCK:
            return self.import_relay_block(message.relay_block)
        if message.kind == WireKind.FINALITY_VOTE:
            return self._feed_vote(message.vote)
        if message.kind == WireKind.FETCH_REQUEST:
            request = message.fetch_request
            payload = self.chain.serve_fetch(request.payload_ref)
            response = FetchResponse(request.channel, request.seq_no, payload or b"")
            return [(sender, fetch_response_msg(response))]
        if message.kind == WireKind.FETCH_RESPONSE:
            return self._on_fetch_response(message.fetch_response)
        if message.kind == WireKind.COMMAND:
            # collators relay operator commands toward the validators
            encoded = canonical_encode(message.command)
            if encoded in self._seen_wire:
                return []
            self._seen_wire.add(encoded)
            return [(None, command_msg(message.command))]
        if message.kind == WireKind.SYNC_REQUEST and message.sync_request.what == 1:
            held = self.receipts.get(message.sync_request.ref)
            if held is not None:
                return [(sender, candidate_msg(held[0], held[1]))]
            return []
        if message.kind in (WireKind.SYNC_REQUEST, WireKind.SYNC_RESPONSE):
            return self.handle_sync(message, sender)
        return []

    def _on_fetch_response(self, response: FetchResponse) -> list[Outgoing]:
        key = (response.channel, response.seq_no)
        pending = self.pending_fetches.get(key)
        if pending is None:
            return []
        if not response.payload:
            return []  # keep pending; retry later
        del self.pending_fetches[key]
        return self._accept_payload(pending.entry, response.payload)
