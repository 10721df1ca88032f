"""Wire protocol between consortium nodes.

One tagged envelope carries every node-to-node message; the simulator
passes envelopes as objects, the live node serializes them with the
canonical codec.  Attestations and finality votes are individually
signed; blocks carry their own signatures.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from freshnet.core.codec import Reader, Writer, canonical_decode, canonical_encode
from freshnet.core.hashing import DIGEST_SIZE, Hash
from freshnet.core.keys import ACCOUNT_SIZE, SIGNATURE_SIZE, AccountId, Keypair, verify
from freshnet.parachain import ParaBlock
from freshnet.relay import CandidateReceipt, DisputeVote, RelayBlock, RelayCommand, Vote
from freshnet.xcm import FetchRequest, FetchResponse


@dataclass(frozen=True)
class Attestation:
    """A validator's statement that it holds and has validated a candidate."""

    candidate_hash: Hash
    validator: AccountId
    signature: bytes

    def signing_payload(self) -> bytes:
        return b"freshnet/attest/" + self.candidate_hash

    def verify(self) -> bool:
        return verify(self.validator, self.signing_payload(), self.signature)

    def encode_into(self, w: Writer) -> None:
        w.fixed(self.candidate_hash, DIGEST_SIZE)
        w.fixed(self.validator, ACCOUNT_SIZE)
        w.fixed(self.signature, SIGNATURE_SIZE)

    @classmethod
    def decode_from(cls, r: Reader) -> "Attestation":
        return cls(r.fixed(DIGEST_SIZE), r.fixed(ACCOUNT_SIZE), r.fixed(SIGNATURE_SIZE))


def make_attestation(keypair: Keypair, candidate_hash: Hash) -> Attestation:
    return Attestation(
        candidate_hash=candidate_hash,
        validator=keypair.account,
        signature=keypair.sign(b"freshnet/attest/" + candidate_hash),
    )


class WireKind(enum.IntEnum):
    CANDIDATE = 0
    ATTESTATION = 1
    RELAY_BLOCK = 2
    FINALITY_VOTE = 3
    DISPUTE_VOTE = 4
    FETCH_REQUEST = 5
    FETCH_RESPONSE = 6
    COMMAND = 7
    SYNC_REQUEST = 8
    SYNC_RESPONSE = 9


@dataclass(frozen=True)
class SyncRequest:
    """Ask any peer for a relay block (what=0) or parablock (what=1)."""

    what: int
    ref: Hash

    def encode_into(self, w: Writer) -> None:
        w.u8(self.what)
        w.fixed(self.ref, DIGEST_SIZE)

    @classmethod
    def decode_from(cls, r: Reader) -> "SyncRequest":
        return cls(r.u8(), r.fixed(DIGEST_SIZE))


@dataclass(frozen=True)
class WireMessage:
    kind: WireKind
    candidate: tuple[CandidateReceipt, ParaBlock] | None = None
    attestation: Attestation | None = None
    relay_block: RelayBlock | None = None
    vote: Vote | None = None
    dispute_vote: DisputeVote | None = None
    fetch_request: FetchRequest | None = None
    fetch_response: FetchResponse | None = None
    command: RelayCommand | None = None
    sync_request: SyncRequest | None = None

    def encode_into(self, w: Writer) -> None:
        w.u8(int(self.kind))
        if self.kind == WireKind.CANDIDATE:
            receipt, block = self.candidate
            receipt.encode_into(w)
            block.encode_into(w)
        elif self.kind == WireKind.ATTESTATION:
            self.attestation.encode_into(w)
        elif self.kind in (WireKind.RELAY_BLOCK, WireKind.SYNC_RESPONSE):
            self.relay_block.encode_into(w)
        elif self.kind == WireKind.FINALITY_VOTE:
            self.vote.encode_into(w)
        elif self.kind == WireKind.DISPUTE_VOTE:
            self.dispute_vote.encode_into(w)
        elif self.kind == WireKind.FETCH_REQUEST:
            self.fetch_request.encode_into(w)
        elif self.kind == WireKind.FETCH_RESPONSE:
            self.fetch_response.encode_into(w)
        elif self.kind == WireKind.COMMAND:
            self.command.encode_into(w)
        elif self.kind == WireKind.SYNC_REQUEST:
            self.sync_request.encode_into(w)

    @classmethod
    def decode_from(cls, r: Reader) -> "WireMessage":
        kind = WireKind(r.u8())
        if kind == WireKind.CANDIDATE:
            return cls(kind, candidate=(CandidateReceipt.decode_from(r), ParaBlock.decode_from(r)))
        if kind == WireKind.ATTESTATION:
            return cls(kind, attestation=Attestation.decode_from(r))
        if kind in (WireKind.RELAY_BLOCK, WireKind.SYNC_RESPONSE):
            return cls(kind, relay_block=RelayBlock.decode_from(r))
        if kind == WireKind.FINALITY_VOTE:
            return cls(kind, vote=Vote.decode_from(r))
        if kind == WireKind.DISPUTE_VOTE:
            return cls(kind, dispute_vote=DisputeVote.decode_from(r))
        if kind == WireKind.FETCH_REQUEST:
            return cls(kind, fetch_request=FetchRequest.decode_from(r))
        if kind == WireKind.FETCH_RESPONSE:
            return cls(kind, fetch_response=FetchResponse.decode_from(r))
        if kind == WireKind.COMMAND:
            return cls(kind, command=RelayCommand.decode_from(r))
        return cls(kind, sync_request=SyncRequest.decode_from(r))

    def to_bytes(self) -> bytes:
        return canonical_encode(self)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WireMessage":
        return canonical_decode(cls, data)


def candidate_msg(receipt: CandidateReceipt, block: ParaBlock) -> WireMessage:
    return WireMessage(WireKind.CANDIDATE, candidate=(receipt, block))


def attestation_msg(attestation: Attestation) -> WireMessage:
    return WireMessage(WireKind.ATTESTATION, attestation=attestation)


def relay_block_msg(block: RelayBlock) -> WireMessage:
    return WireMessage(WireKind.RELAY_BLOCK, relay_block=block)


def vote_msg(vote: Vote) -> WireMessage:
    return WireMessage(WireKind.FINALITY_VOTE, vote=vote)


def dispute_msg(vote: DisputeVote) -> WireMessage:
    return WireMessage(WireKind.DISPUTE_VOTE, dispute_vote=vote)


def fetch_request_msg(request: FetchRequest) -> WireMessage:
    return WireMessage(WireKind.FETCH_REQUEST, fetch_request=request)


def fetch_response_msg(response: FetchResponse) -> WireMessage:
    return WireMessage(WireKind.FETCH_RESPONSE, fetch_response=response)


def command_msg(command: RelayCommand) -> WireMessage:
    return WireMessage(WireKind.COMMAND, command=command)


def sync_request_msg(what: int, ref: Hash) -> WireMessage:
    return WireMessage(WireKind.SYNC_REQUEST, sync_request=SyncRequest(what, ref))


def sync_response_msg(block: RelayBlock) -> WireMessage:
    return WireMessage(WireKind.SYNC_RESPONSE, relay_block=block)
