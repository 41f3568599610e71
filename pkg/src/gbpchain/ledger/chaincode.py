"""Asset chaincode: the rules every endorser re-executes before signing.

Global rule: only the organization that created an asset may alter it.
"""
from __future__ import annotations

from .assets import ENDPOINT_KINDS, Asset, AssetKind, asset_key, split_key
from .errors import InvalidAsset, KeyAbsent, KeyExists, OwnershipViolation
from .state import StateStore
from .tx import Read, TransactionProposal, Write, WriteMode


class _Reader:
    def __init__(self, state: StateStore):
        self.state = state
        self.reads: dict[str, Read] = {}

    def get(self, key: str) -> Asset | None:
        entry = self.state.get(key)
        if key not in self.reads:
            self.reads[key] = Read(key, None if entry is None else entry[1])
        return None if entry is None else Asset.from_bytes(entry[0])


def _decode(write: Write) -> Asset:
    try:
        asset = Asset.from_bytes(write.value)
        asset.validate()
    except (ValueError, KeyError, TypeError) as e:
        raise InvalidAsset(f"{write.key}: {e}") from None
    if asset.key != write.key:
        raise InvalidAsset(f"write key {write.key!r} does not match asset key {asset.key!r}")
    return asset


def _check_create(asset: Asset, issuer: str, r: _Reader) -> None:
    if asset.owner != issuer:
        raise OwnershipViolation(f"{issuer} cannot create {asset.key} owned by {asset.owner}")
    if asset.kind in ENDPOINT_KINDS:
        # one namespace per org across users, groups and resources
        for kind in ENDPOINT_KINDS:
            if r.get(asset_key(kind, asset.body.ref)) is not None:
                raise KeyExists(f"{asset.body.ref} already names a {kind.value}")
    elif r.get(asset.key) is not None:
        raise KeyExists(asset.key)
    if asset.kind is AssetKind.DEPARTMENT:
        for m in asset.body.members:
            if r.get(asset_key(AssetKind.USER, m.ref)) is None:
                raise KeyAbsent(f"group member {m.ref} is not a user")
    elif asset.kind is AssetKind.POLICY:
        src, dst = asset.body.src, asset.body.dst
        if r.get(asset_key(AssetKind.USER, src)) is None and r.get(asset_key(AssetKind.DEPARTMENT, src)) is None:
            raise KeyAbsent(f"policy source {src} is neither a user nor a group")
        target = r.get(asset_key(AssetKind.RESOURCE, dst)) or r.get(asset_key(AssetKind.USER, dst))
        if target is None:
            raise KeyAbsent(f"policy destination {dst} is neither a resource nor a member")
        if target.owner != issuer:
            raise OwnershipViolation(f"{issuer} cannot grant access to {dst} owned by {target.owner}")


def simulate_chaincode(proposal: TransactionProposal, state: StateStore) -> tuple[tuple[Read, ...], tuple[Write, ...]]:
    """Execute the proposal against state without mutating it.

    Returns (read_set, write_set); raises a ChaincodeRejection subclass.
    """
    keys = [w.key for w in proposal.writes]
    if len(set(keys)) != len(keys):
        raise InvalidAsset("a transaction may write each key once")
    r = _Reader(state)
    issuer = proposal.issuer
    for w in proposal.writes:
        try:
            split_key(w.key)
        except ValueError:
            raise InvalidAsset(f"unknown key namespace in {w.key!r}") from None
        if w.mode is WriteMode.CREATE:
            _check_create(_decode(w), issuer, r)
            continue
        current = r.get(w.key)
        if current is None:
            raise KeyAbsent(w.key)
        if current.owner != issuer:
            raise OwnershipViolation(f"{issuer} cannot modify {w.key} owned by {current.owner}")
        if w.mode is WriteMode.UPDATE:
            new = _decode(w)
            if new.owner != current.owner or new.kind is not current.kind:
                raise OwnershipViolation(f"update may not change owner or kind of {w.key}")
    return tuple(r.reads.values()), proposal.writes


def ownership_holds(issuer: str, writes, state: StateStore) -> bool:
    """Commit-time recheck of the owner-only rule against the current state."""
    for w in writes:
        entry = state.get(w.key)
        if w.mode is WriteMode.CREATE:
            try:
                if Asset.from_bytes(w.value).owner != issuer:
                    return False
            except (ValueError, KeyError, TypeError):
                return False
        elif entry is None or Asset.from_bytes(entry[0]).owner != issuer:
            return False
    return True
