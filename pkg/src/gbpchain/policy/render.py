"""Turn parsed intents into transaction proposals against the ledger key scheme."""
from __future__ import annotations

from ..ledger.assets import (Asset, AssetKind, Member, asset_key, make_department, make_policy,
                             make_resource, make_user, policy_key)
from ..ledger.errors import UnresolvableReference
from ..ledger.state import StateStore
from ..ledger.tx import TransactionProposal, Write, WriteMode
from .grammar import Action, Intent, Target, Verb, qualify

_DELETE_KINDS = {
    Target.MEMBER: AssetKind.USER,
    Target.GROUP: AssetKind.DEPARTMENT,
    Target.RESOURCE: AssetKind.RESOURCE,
}


def _resolve(ref: str, issuer: str, kinds: tuple[AssetKind, ...], state: StateStore, what: str) -> str:
    """Qualify an unqualified name with the issuer's org and confirm it names one of kinds."""
    q = qualify(ref, issuer)
    for kind in kinds:
        if asset_key(kind, q) in state:
            return q
    expected = " or ".join(k.name.lower() for k in kinds)
    raise UnresolvableReference(f"{what} {ref!r} does not name an existing {expected}")


def _find_policy_by_name(name: str, issuer: str, state: StateStore) -> str:
    for key in sorted(state.keys("policy:")):
        asset = Asset.from_bytes(state.value(key))
        if asset.owner == issuer and asset.body.name == name:
            return key
    raise UnresolvableReference(f"no policy rule named {name!r} owned by {issuer}")


def render_proposal(intent: Intent, issuer: str, state: StateStore, now: float = 0.0,
                    nonce: int = 0) -> TransactionProposal:
    """Build the proposal an issuing org sends for endorsement.

    Unqualified names are taken to belong to the issuer. The read-set is
    left empty; simulation fills it in.
    """
    o = intent.options
    name = intent.subject
    expiry = now + o.timeout if o.timeout is not None else None

    if intent.verb is Verb.CREATE_MEMBER:
        asset = make_user(issuer, name, o.pubkey or "", o.ip or "", o.dept or "")
        writes = [Write(asset.key, WriteMode.CREATE, asset.to_bytes())]
    elif intent.verb is Verb.CREATE_GROUP:
        members = [
            Member(_resolve(ref, issuer, (AssetKind.USER,), state, "--add"), expiry)
            for ref in o.add
        ]
        asset = make_department(issuer, name, members)
        writes = [Write(asset.key, WriteMode.CREATE, asset.to_bytes())]
    elif intent.verb is Verb.CREATE_RESOURCE:
        asset = make_resource(issuer, name, o.ip)
        writes = [Write(asset.key, WriteMode.CREATE, asset.to_bytes())]
    elif intent.verb is Verb.CREATE_POLICY_RULE:
        src = _resolve(o.src, issuer, (AssetKind.USER, AssetKind.DEPARTMENT), state, "--src")
        dst = _resolve(o.dst, issuer, (AssetKind.RESOURCE, AssetKind.USER), state, "--dst")
        action = (o.actions or Action.ALLOW).value
        asset = make_policy(issuer, src, dst, action, name, now, expiry)
        writes = [Write(asset.key, WriteMode.CREATE, asset.to_bytes())]
    elif intent.verb is Verb.DELETE:
        if intent.target is Target.POLICY_RULE:
            if o.src is not None:
                key = policy_key(qualify(o.src, issuer), qualify(o.dst, issuer))
                if key not in state:
                    raise UnresolvableReference(f"no policy {key}")
            else:
                key = _find_policy_by_name(name, issuer, state)
        else:
            kind = _DELETE_KINDS[intent.target]
            key = asset_key(kind, _resolve(name, issuer, (kind,), state, intent.target.value))
        writes = [Write(key, WriteMode.DELETE)]
    else:
        raise ValueError(f"{intent.verb.value} is read-only and has no proposal")
    return TransactionProposal(issuer, tuple(writes), now, nonce)
