"""Organization identities (one membership service provider per org)."""
from __future__ import annotations

from dataclasses import dataclass

from .. import crypto
from ..policy.grammar import is_simple_name
from .errors import DuplicateOrg, InvalidKey, UnknownOrg


@dataclass(frozen=True)
class OrgIdentity:
    org_id: str
    public_key: bytes
    endorser: bool = True
    orderer_client: bool = True


class Msp:
    def __init__(self):
        self._orgs: dict[str, OrgIdentity] = {}

    def register_org(self, org_id: str, public_key: bytes) -> OrgIdentity:
        if not isinstance(org_id, str) or not is_simple_name(org_id):
            raise InvalidKey(f"invalid org id {org_id!r}")
        if org_id in self._orgs:
            raise DuplicateOrg(org_id)
        try:
            crypto.load_verify_key(public_key)
        except Exception as e:
            raise InvalidKey(f"{org_id}: {e}") from None
        ident = OrgIdentity(org_id, bytes(public_key))
        self._orgs[org_id] = ident
        return ident

    def get(self, org_id: str) -> OrgIdentity:
        try:
            return self._orgs[org_id]
        except KeyError:
            raise UnknownOrg(org_id) from None

    def __contains__(self, org_id) -> bool:
        return org_id in self._orgs

    def __iter__(self):
        return iter(self._orgs.values())

    def __len__(self):
        return len(self._orgs)

    def org_ids(self) -> list[str]:
        return list(self._orgs)
