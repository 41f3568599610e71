"""Committed chain, validation and the query surface used by the control plane."""
from __future__ import annotations

import ipaddress
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .. import crypto
from ..clock import SystemClock
from ..policy.grammar import Action
from .assets import Asset, AssetKind, asset_key, policy_key, split_key
from .blocklog import BlockLog
from .chaincode import ownership_holds
from .endorsement import Expr, all_of, evaluate, parse_policy, to_text
from .errors import BrokenChain
from .msp import Msp
from .state import StateStore
from .tx import (ZERO_DIGEST, Block, CutReason, OrgConfig, TxStatus, WriteMode, decode_config,
                 encode_config, endorsement_message)

log = logging.getLogger(__name__)


def eid_of(ip: str) -> int | None:
    if not ip:
        return None
    return int(ipaddress.IPv4Address(ip))


def make_genesis(orgs: list[OrgConfig], policy: Expr | str | None = None, now: float = 0.0) -> Block:
    text = policy if isinstance(policy, str) else ("" if policy is None else to_text(policy))
    return Block(0, ZERO_DIGEST, CutReason.GENESIS, now, (), encode_config(tuple(orgs), text))


@dataclass(frozen=True)
class TxLocation:
    height: int
    index: int
    status: TxStatus


class Ledger:
    """One peer's view of the committed chain plus its world state.

    Queries and commits serialize on one lock, so readers only ever observe
    fully committed blocks.
    """

    def __init__(self, genesis: Block, *, clock=None, log_path=None, parallel_verify: bool = False):
        self.clock = clock or SystemClock()
        self.msp = Msp()
        self.state = StateStore()
        self.blocks: list[Block] = []
        self.parallel_verify = parallel_verify
        self.signature_verifications = 0
        self._policy_text = ""
        self._policy: Expr | None = None
        self._size = 0
        self._txs: dict[bytes, TxLocation] = {}
        self._lock = threading.RLock()
        self._eids: dict[int, set[str]] = {}
        self._groups_of: dict[str, set[str]] = {}
        self._label_members: dict[str, set[str]] = {}
        self._policy_keys: set[str] = set()
        self._pool = ThreadPoolExecutor(max_workers=8) if parallel_verify else None
        self._log = BlockLog(log_path) if log_path is not None else None
        self.validate_and_commit(genesis)

    # chain ---------------------------------------------------------------

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    @property
    def tip_digest(self) -> bytes:
        return self.blocks[-1].digest

    @property
    def endorsement_policy(self) -> Expr:
        if self._policy is not None:
            return self._policy
        return all_of(self.msp.org_ids())

    def tx_location(self, tx_id: bytes) -> TxLocation | None:
        return self._txs.get(tx_id)

    def tx_count(self) -> int:
        return len(self._txs)

    def _apply_config(self, block: Block) -> None:
        orgs, text = decode_config(block.config)
        for o in orgs:
            self.msp.register_org(o.org_id, o.public_key)
        if text:
            self._policy_text = text
            self._policy = parse_policy(text)

    def validate_and_commit(self, block: Block) -> tuple[TxStatus, ...]:
        """Validate every transaction in order and apply the valid ones.

        Invalid transactions stay in the block, flagged. Raises BrokenChain if
        the block does not extend the current tip.
        """
        with self._lock:
            if not self.blocks:
                if block.height != 0 or block.prev_digest != ZERO_DIGEST or block.cut_reason is not CutReason.GENESIS:
                    raise BrokenChain("first block must be a genesis block")
            elif block.height != self.height + 1 or block.prev_digest != self.tip_digest:
                raise BrokenChain(f"block {block.height} does not extend tip {self.height}")
            if block.cut_reason in (CutReason.GENESIS, CutReason.CONFIG):
                if block.transactions:
                    raise BrokenChain("configuration blocks carry no transactions")
                self._apply_config(block)
                statuses: tuple[TxStatus, ...] = ()
            else:
                statuses = tuple(self._validate_tx(block.height, i, tx) for i, tx in enumerate(block.transactions))
            if block.statuses is not None and block.statuses != statuses and block.transactions:
                raise BrokenChain(f"block {block.height}: recorded validity flags differ from re-validation")
            block.statuses = statuses
            self.blocks.append(block)
            record = block.encode()
            self._size += len(record)
            if self._log is not None:
                self._log.append(record)
            return statuses

    def _verify_endorsements(self, tx) -> set[str]:
        msg = endorsement_message(tx.proposal)
        ends = tx.endorsements
        self.signature_verifications += len(ends)

        def check(e):
            return e.endorser in self.msp and crypto.verify(self.msp.get(e.endorser).public_key, msg, e.signature)

        if self._pool is not None and len(ends) > 1:
            ok = list(self._pool.map(check, ends))
        else:
            ok = [check(e) for e in ends]
        return {e.endorser for e, good in zip(ends, ok) if good}

    def _validate_tx(self, height: int, index: int, tx) -> TxStatus:
        status = self._check_tx(tx)
        if status is TxStatus.VALID:
            for w in tx.proposal.writes:
                before = self.state.get(w.key)
                old = Asset.from_bytes(before[0]) if before else None
                if w.mode is WriteMode.DELETE:
                    self.state.delete(w.key)
                    new = None
                else:
                    self.state.put(w.key, w.value, (height, index))
                    new = Asset.from_bytes(w.value)
                self._reindex(w.key, old, new)
        else:
            log.info("tx %s invalid: %s", tx.tx_id.hex()[:16], status.name)
        self._txs.setdefault(tx.tx_id, TxLocation(height, index, status))
        return status

    def _check_tx(self, tx) -> TxStatus:
        prop = tx.proposal
        if prop.issuer not in self.msp or tx.tx_id in self._txs:
            return TxStatus.BAD_PROPOSAL
        read_keys = {r.key for r in prop.reads}
        if any(w.key not in read_keys for w in prop.writes):
            return TxStatus.BAD_PROPOSAL
        if not evaluate(self.endorsement_policy, self._verify_endorsements(tx)):
            return TxStatus.ENDORSEMENT_POLICY_FAILURE
        for r in prop.reads:
            if self.state.version(r.key) != r.version:
                return TxStatus.MVCC_READ_CONFLICT
        if not ownership_holds(prop.issuer, prop.writes, self.state):
            return TxStatus.OWNERSHIP_VIOLATION
        return TxStatus.VALID

    def _reindex(self, key: str, old: Asset | None, new: Asset | None) -> None:
        kind, ref = split_key(key)
        for asset, add in ((old, False), (new, True)):
            if asset is None:
                continue
            body = asset.body
            if kind in (AssetKind.USER, AssetKind.RESOURCE):
                eid = eid_of(body.ip)
                if eid is not None:
                    refs = self._eids.setdefault(eid, set())
                    refs.add(key) if add else refs.discard(key)
                if kind is AssetKind.USER and body.department:
                    members = self._label_members.setdefault(f"{body.org}.{body.department}", set())
                    members.add(ref) if add else members.discard(ref)
            elif kind is AssetKind.DEPARTMENT:
                for m in body.members:
                    groups = self._groups_of.setdefault(m.ref, set())
                    groups.add(ref) if add else groups.discard(ref)
            elif kind is AssetKind.POLICY:
                self._policy_keys.add(key) if add else self._policy_keys.discard(key)

    # persistence ---------------------------------------------------------

    def chain_size_bytes(self) -> int:
        return self._size

    def state_snapshot(self) -> bytes:
        with self._lock:
            return self.state.snapshot()

    @classmethod
    def replay(cls, blocks, **kwargs) -> "Ledger":
        it = iter(blocks)
        ledger = cls(next(it), **kwargs)
        for b in it:
            ledger.validate_and_commit(b)
        return ledger

    @classmethod
    def from_log(cls, path, attach: bool = True, **kwargs) -> "Ledger":
        """Rebuild from a block log; with attach, later commits append to the same log."""
        ledger = cls.replay(BlockLog(path).blocks(), **kwargs)
        if attach:
            ledger._log = BlockLog(path)
        return ledger

    # queries -------------------------------------------------------------

    def _now(self, now):
        return self.clock.now() if now is None else now

    def query_state(self, key: str) -> Asset | None:
        with self._lock:
            raw = self.state.value(key)
        return None if raw is None else Asset.from_bytes(raw)

    def query_raw(self, key: str) -> bytes | None:
        with self._lock:
            return self.state.value(key)

    def query_policy(self, src_ref: str, dst_ref: str, now: float | None = None) -> Asset | None:
        """Exact-match lookup on the composite key; expired policies read as absent."""
        asset = self.query_state(policy_key(src_ref, dst_ref))
        if asset is None or not asset.body.active(self._now(now)):
            return None
        return asset

    get_policy = query_policy

    def get_user_pubkey(self, user_ref: str) -> bytes | None:
        user = self.query_state(asset_key(AssetKind.USER, user_ref))
        if user is None or not user.body.public_key:
            return None
        return bytes.fromhex(user.body.public_key)

    def get_user_eid(self, user_ref: str) -> int | None:
        user = self.query_state(asset_key(AssetKind.USER, user_ref))
        return None if user is None else eid_of(user.body.ip)

    def export_user_directory(self) -> dict[str, tuple[bytes, int | None]]:
        """user-ref -> (public key, eid) for every user that registered a key."""
        out = {}
        with self._lock:
            for key in sorted(self.state.keys("user:")):
                user = Asset.from_bytes(self.state.value(key)).body
                if user.public_key:
                    out[user.ref] = (bytes.fromhex(user.public_key), eid_of(user.ip))
        return out

    def ref_for_eid(self, eid: int) -> str | None:
        with self._lock:
            keys = sorted(self._eids.get(eid, ()))
        return split_key(keys[0])[1] if keys else None

    def _groups_for(self, user: Asset) -> list[tuple[str, float | None]]:
        out = []
        for g in sorted(self._groups_of.get(user.body.ref, ())):
            dept = self.query_state(asset_key(AssetKind.DEPARTMENT, g))
            for m in dept.body.members:
                if m.ref == user.body.ref:
                    out.append((g, m.expiry))
        if user.body.department:
            label = f"{user.body.org}.{user.body.department}"
            if self.query_state(asset_key(AssetKind.DEPARTMENT, label)) is not None:
                out.append((label, None))
        return out

    def access_decision(self, user_ref: str, dst_ref: str, now: float | None = None) -> tuple[Action, str]:
        """(Allow|Deny, reason); reason is one of Direct, Group, Denied, Expired, NoPolicy, UnknownUser."""
        now = self._now(now)
        with self._lock:
            user = self.query_state(asset_key(AssetKind.USER, user_ref))
            if user is None:
                return Action.DENY, "UnknownUser"
            expired = False
            direct = self.query_state(policy_key(user_ref, dst_ref))
            if direct is not None:
                if direct.body.active(now):
                    action = Action(direct.body.action)
                    return action, "Direct" if action is Action.ALLOW else "Denied"
                expired = True
            for group, member_expiry in self._groups_for(user):
                p = self.query_state(policy_key(group, dst_ref))
                if p is None or p.body.action != Action.ALLOW.value:
                    continue
                if p.body.active(now) and (member_expiry is None or member_expiry >= now):
                    return Action.ALLOW, "Group"
                expired = True
            return Action.DENY, "Expired" if expired else "NoPolicy"

    def resolve_access(self, user_ref: str, resource_ref: str, now: float | None = None) -> Action:
        """Default-deny: Allow only through an unexpired direct or group Allow policy."""
        return self.access_decision(user_ref, resource_ref, now)[0]

    def access_decision_eid(self, user_ref: str, dst_eid: int, now: float | None = None) -> tuple[Action, str]:
        dst_ref = self.ref_for_eid(dst_eid)
        if dst_ref is None:
            return Action.DENY, "NoPolicy"
        return self.access_decision(user_ref, dst_ref, now)

    def export_policy_snapshot(self, now: float | None = None) -> list[tuple[str, str, Action]]:
        """Committed, unexpired Allow policies as (src-ref, dst-ref, Allow)."""
        now = self._now(now)
        out = []
        with self._lock:
            for key in sorted(self._policy_keys):
                p = Asset.from_bytes(self.state.value(key)).body
                if p.action == Action.ALLOW.value and p.active(now):
                    out.append((p.src, p.dst, Action.ALLOW))
        return out

    def _endpoint_eid(self, ref: str) -> int | None:
        for kind in (AssetKind.RESOURCE, AssetKind.USER):
            a = self.query_state(asset_key(kind, ref))
            if a is not None:
                return eid_of(a.body.ip)
        return None

    def _users_of(self, src: str, now: float) -> list[tuple[str, float | None]]:
        if self.query_state(asset_key(AssetKind.USER, src)) is not None:
            return [(src, None)]
        dept = self.query_state(asset_key(AssetKind.DEPARTMENT, src))
        if dept is None:
            return []
        users = [(m.ref, m.expiry) for m in dept.body.members if m.active(now)]
        users += [(u, None) for u in sorted(self._label_members.get(src, ()))]
        return users

    def export_eid_snapshot(self, now: float | None = None) -> list[tuple[int, int, float | None]]:
        """Allow pairs expanded to endpoint addresses: (src-eid, dst-eid, expiry or None).

        Groups expand to their active members; an explicit direct Deny wins
        over group grants; expiry is the earlier of policy and membership expiry.
        """
        now = self._now(now)
        pairs: dict[tuple[int, int], float | None] = {}
        with self._lock:
            for src, dst, _ in self.export_policy_snapshot(now):
                policy = self.query_state(policy_key(src, dst)).body
                dst_eid = self._endpoint_eid(dst)
                if dst_eid is None:
                    continue
                for user_ref, member_expiry in self._users_of(src, now):
                    direct = self.query_state(policy_key(user_ref, dst))
                    if direct is not None and direct.body.active(now) and direct.body.action != Action.ALLOW.value:
                        continue
                    src_eid = self.get_user_eid(user_ref)
                    if src_eid is None:
                        continue
                    expiries = [e for e in (policy.expiry, member_expiry) if e is not None]
                    expiry = min(expiries) if expiries else None
                    key = (src_eid, dst_eid)
                    if key in pairs:
                        prev = pairs[key]
                        expiry = None if prev is None or expiry is None else max(prev, expiry)
                    pairs[key] = expiry
        return [(s, d, e) for (s, d), e in sorted(pairs.items())]
