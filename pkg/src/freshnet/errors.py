"""Domain errors carrying stable reason codes.

The ``code`` string is what pool rejections, block-invalidity verdicts,
API error payloads, and the CLI surface to callers, so it stays fixed
even if messages change.
"""

from __future__ import annotations


class ChainError(Exception):
    """Base for all chain-level failures; ``code`` is machine-readable."""

    code = "ChainError"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


def _make(code_name: str) -> type[ChainError]:
    return type(code_name, (ChainError,), {"code": code_name})


NotAuthorized = _make("NotAuthorized")
UnknownPallet = _make("UnknownPallet")
GrantNotFound = _make("GrantNotFound")
StaleNonce = _make("StaleNonce")
BadSignature = _make("BadSignature")
DuplicateProduct = _make("DuplicateProduct")
DuplicateShipment = _make("DuplicateShipment")
UnknownProduct = _make("UnknownProduct")
UnknownShipment = _make("UnknownShipment")
IllegalTransition = _make("IllegalTransition")
InvalidReading = _make("InvalidReading")
UnknownCall = _make("UnknownCall")
ChannelNotOpen = _make("ChannelNotOpen")
ChannelExists = _make("ChannelExists")
ChannelFull = _make("ChannelFull")
MessageTooBig = _make("MessageTooBig")
GapDetected = _make("GapDetected")
PostageProofInvalid = _make("PostageProofInvalid")
NotFinalizedOrigin = _make("NotFinalizedOrigin")
NotRegistered = _make("NotRegistered")
OrgAlreadyRegistered = _make("OrgAlreadyRegistered")
CapacityExceeded = _make("CapacityExceeded")
UnknownOrg = _make("UnknownOrg")
NoValidators = _make("NoValidators")
NotSlotAuthor = _make("NotSlotAuthor")
NotCollator = _make("NotCollator")
UnknownReceipt = _make("UnknownReceipt")
EquivocationDetected = _make("EquivocationDetected")
RootMismatch = _make("RootMismatch")
ConfigInvalid = _make("ConfigInvalid")
CorruptStore = _make("CorruptStore")
