"""Signed transactions targeting one pallet call on one parachain."""

from __future__ import annotations

from dataclasses import dataclass

from freshnet.core.codec import Reader, Writer, canonical_encode
from freshnet.core.hashing import Hash, hash_blob
from freshnet.core.keys import ACCOUNT_SIZE, SIGNATURE_SIZE, AccountId, Keypair, verify


@dataclass(frozen=True)
class Extrinsic:
    """A pallet call signed by an account.

    The signature covers the canonical encoding of all prior fields
    (signer, target_pallet, call, args, nonce).  Nonces strictly
    increase per signer per chain.
    """

    signer: AccountId
    target_pallet: str
    call: str
    args: bytes
    nonce: int
    signature: bytes

    def signing_payload(self) -> bytes:
        w = Writer()
        w.fixed(self.signer, ACCOUNT_SIZE)
        w.text(self.target_pallet)
        w.text(self.call)
        w.blob(self.args)
        w.u64(self.nonce)
        return w.finish()

    def verify_signature(self) -> bool:
        return verify(self.signer, self.signing_payload(), self.signature)

    def hash(self) -> Hash:
        return hash_blob(canonical_encode(self))

    def encode_into(self, w: Writer) -> None:
        w.fixed(self.signer, ACCOUNT_SIZE)
        w.text(self.target_pallet)
        w.text(self.call)
        w.blob(self.args)
        w.u64(self.nonce)
        w.fixed(self.signature, SIGNATURE_SIZE)

    @classmethod
    def decode_from(cls, r: Reader) -> "Extrinsic":
        return cls(
            signer=r.fixed(ACCOUNT_SIZE),
            target_pallet=r.text(),
            call=r.text(),
            args=r.blob(),
            nonce=r.u64(),
            signature=r.fixed(SIGNATURE_SIZE),
        )


def sign_extrinsic(
    keypair: Keypair, target_pallet: str, call: str, args: bytes, nonce: int
) -> Extrinsic:
    """Build and sign an extrinsic in one step."""
    unsigned = Extrinsic(
        signer=keypair.account,
        target_pallet=target_pallet,
        call=call,
        args=args,
        nonce=nonce,
        signature=b"\x00" * SIGNATURE_SIZE,
    )
    signature = keypair.sign(unsigned.signing_payload())
    return Extrinsic(
        signer=keypair.account,
        target_pallet=target_pallet,
        call=call,
        args=args,
        nonce=nonce,
        signature=signature,
    )
