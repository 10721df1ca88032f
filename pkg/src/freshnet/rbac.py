"""On-chain role registry enforced at the transaction-pool stage.

A role is a (pallet, permission) pair granted to an account.  Manage
dominates Execute: holding Manage on a pallet implies Execute on it and
additionally allows assigning/revoking roles for that pallet.  The
converse never holds.  A configurable admin set seeded at genesis
bootstraps the first grants; only genesis admins may grant roles on the
rbac pallet itself.

Grants live in chain state under ``rbac/...`` keys, so they contribute
to the state root and are replayed identically by every validator.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from freshnet.core import AccountId, StateStore
from freshnet.core.codec import Reader, Writer
from freshnet.core.extrinsic import Extrinsic
from freshnet.core.keys import ACCOUNT_SIZE
from freshnet.errors import GrantNotFound, NotAuthorized, UnknownPallet

#: The runtime's registered pallet set.
PALLETS = ("rbac", "products", "shipments", "tracking", "sensing")


class Permission(enum.IntEnum):
    EXECUTE = 0
    MANAGE = 1

    @classmethod
    def parse(cls, name: str) -> "Permission":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown permission {name!r}") from None

    def label(self) -> str:
        return self.name.capitalize()


@dataclass(frozen=True)
class Role:
    pallet: str
    permission: Permission


@dataclass(frozen=True)
class PoolVerdict:
    """Accept or Reject(reason); rejections are never silent."""

    accepted: bool
    reason: str | None = None

    @classmethod
    def accept(cls) -> "PoolVerdict":
        return cls(True)

    @classmethod
    def reject(cls, reason: str) -> "PoolVerdict":
        return cls(False, reason)


@dataclass(frozen=True)
class RoleChangeArgs:
    """Arguments of the rbac pallet's assign_role / revoke_role calls."""

    target: AccountId
    pallet: str
    permission: Permission

    def encode_into(self, w: Writer) -> None:
        w.fixed(self.target, ACCOUNT_SIZE)
        w.text(self.pallet)
        w.u8(int(self.permission))

    @classmethod
    def decode_from(cls, r: Reader) -> "RoleChangeArgs":
        target = r.fixed(ACCOUNT_SIZE)
        pallet = r.text()
        permission = Permission(r.u8())
        return cls(target, pallet, permission)

    @property
    def role(self) -> Role:
        return Role(self.pallet, self.permission)


def _admin_key(account: AccountId) -> bytes:
    return b"rbac/admin/" + account.hex().encode()

def _grant_key(account: AccountId, role: Role) -> bytes:
    return b"rbac/grant/%s/%s/%d" % (account.hex().encode(), role.pallet.encode(), role.permission)


class RoleRegistry:
    """View over the rbac portion of one parachain's state."""

    def __init__(self, state: StateStore):
        self.state = state

    # -- genesis ----------------------------------------------------------

    def seed_admin(self, account: AccountId) -> None:
        self.state.set(_admin_key(account), b"\x01")

    def seed_grant(self, account: AccountId, role: Role) -> None:
        """Genesis-only direct grant; bypasses the Manage requirement."""
        if role.pallet not in PALLETS:
            raise UnknownPallet(role.pallet)
        self.state.set(_grant_key(account, role), b"\x01")

    # -- queries ----------------------------------------------------------

    def is_admin(self, account: AccountId) -> bool:
        return self.state.contains(_admin_key(account))

    def has_grant(self, account: AccountId, role: Role) -> bool:
        return self.state.contains(_grant_key(account, role))

    def check_access(self, account: AccountId, pallet: str, needed: Permission) -> bool:
        """True iff the account holds (pallet, needed), or needed is
        Execute and it holds (pallet, Manage), or it is a genesis admin."""
        if self.has_grant(account, Role(pallet, needed)):
            return True
        if needed == Permission.EXECUTE and self.has_grant(account, Role(pallet, Permission.MANAGE)):
            return True
        return self.is_admin(account)

    def list_grants(self) -> list[tuple[AccountId, Role]]:
        out = []
        for key in self.state.keys_with_prefix(b"rbac/grant/"):
            _, _, acct_hex, pallet, perm = key.decode().split("/")
            out.append((bytes.fromhex(acct_hex), Role(pallet, Permission(int(perm)))))
        return out

    def list_admins(self) -> list[AccountId]:
        return [
            bytes.fromhex(key.decode().split("/")[2])
            for key in self.state.keys_with_prefix(b"rbac/admin/")
        ]

    # -- mutations (single-threaded state-transition function only) -------

    def _require_manager(self, caller: AccountId, pallet: str) -> None:
        if pallet not in PALLETS:
            raise UnknownPallet(pallet)
        if pallet == "rbac":
            # Meta-administration: roles on the rbac pallet itself require
            # genesis-admin status, not merely Manage.
            if not self.is_admin(caller):
                raise NotAuthorized("rbac roles require a genesis admin")
            return
        if not (self.has_grant(caller, Role(pallet, Permission.MANAGE)) or self.is_admin(caller)):
            raise NotAuthorized(f"caller lacks Manage on {pallet}")

    def assign_role(self, caller: AccountId, target: AccountId, role: Role) -> None:
        self._require_manager(caller, role.pallet)
        self.state.set(_grant_key(target, role), b"\x01")

    def revoke_role(self, caller: AccountId, target: AccountId, role: Role) -> None:
        self._require_manager(caller, role.pallet)
        key = _grant_key(target, role)
        if not self.state.contains(key):
            raise GrantNotFound(f"{role.pallet}/{role.permission.label()} not granted")
        self.state.delete(key)


def validate_in_pool(registry: RoleRegistry, xt: Extrinsic) -> PoolVerdict:
    """Pool-stage access check; the signature is assumed verified.

    Ordinary calls need Execute on the target pallet.  The rbac pallet's
    assign/revoke calls instead need Manage on the pallet named in their
    arguments (genesis admins pass everything).
    """
    if xt.target_pallet not in PALLETS:
        return PoolVerdict.reject("UnknownPallet")
    if xt.target_pallet == "rbac" and xt.call in ("assign_role", "revoke_role"):
        try:
            args = RoleChangeArgs.decode_from(Reader(xt.args))
        except Exception:
            return PoolVerdict.reject("UnknownPallet")
        if args.pallet not in PALLETS:
            return PoolVerdict.reject("UnknownPallet")
        if args.pallet == "rbac":
            if not registry.is_admin(xt.signer):
                return PoolVerdict.reject("NotAuthorized")
            return PoolVerdict.accept()
        if registry.check_access(xt.signer, args.pallet, Permission.MANAGE):
            return PoolVerdict.accept()
        return PoolVerdict.reject("NotAuthorized")
    if registry.check_access(xt.signer, xt.target_pallet, Permission.EXECUTE):
        return PoolVerdict.accept()
    return PoolVerdict.reject("NotAuthorized")
