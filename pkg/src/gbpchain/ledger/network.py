"""In-process permissioned network: peers, endorsement, SOLO ordering and commit.

The gateway flow for one change is::

    proposal = network.propose(intent, issuer)      # render + issuer-side simulation
    endorsements = network.collect_endorsements(proposal)
    result = network.transact(proposal)             # endorse, order, wait for commit
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

from nacl.signing import SigningKey

from .. import crypto
from ..clock import SystemClock
from ..policy.grammar import Intent
from .chaincode import simulate_chaincode
from .endorsement import Expr, evaluate
from .errors import DuplicateOrg, PolicyUnsatisfied, SimulationMismatch, UnknownOrg
from .ledger import Ledger, make_genesis
from .msp import Msp, OrgIdentity
from .orderer import DEFAULT_BLOCK_TIMEOUT, DEFAULT_MAX_BLOCK_TXS, SoloOrderer
from .state import StateStore
from .tx import Endorsement, OrgConfig, Transaction, TransactionProposal, TxStatus, encode_config, endorsement_message, rwset_digest

log = logging.getLogger(__name__)


@dataclass
class Peer:
    org_id: str
    signing_key: SigningKey
    state: StateStore


def endorse(proposal: TransactionProposal, endorser: Peer) -> Endorsement:
    """Re-execute the chaincode on the endorser's replica and sign the result.

    Raises SimulationMismatch when the replica's read/write set differs from
    the one carried by the proposal; chaincode rejections propagate.
    """
    reads, writes = simulate_chaincode(proposal, endorser.state)
    if rwset_digest(reads, writes) != proposal.rwset_digest:
        raise SimulationMismatch(f"{endorser.org_id} computed a different read/write set")
    return Endorsement(endorser.org_id, crypto.sign(endorser.signing_key, endorsement_message(proposal)))


@dataclass(frozen=True)
class TxResult:
    tx_id: bytes
    height: int
    index: int
    status: TxStatus

    @property
    def valid(self) -> bool:
        return self.status is TxStatus.VALID


class Network:
    def __init__(self, orgs=(), *, policy: Expr | str | None = None, clock=None,
                 block_timeout: float = DEFAULT_BLOCK_TIMEOUT, max_block_txs: int = DEFAULT_MAX_BLOCK_TXS,
                 log_path=None, parallel_verify: bool = False, ledger: Ledger | None = None):
        """orgs: org ids (fresh keys) or a mapping org id -> SigningKey."""
        self.clock = clock or SystemClock()
        keys = dict(orgs) if isinstance(orgs, dict) else {o: crypto.new_signing_key() for o in orgs}
        if ledger is None:
            check = Msp()
            for org_id, key in keys.items():
                check.register_org(org_id, crypto.public_bytes(key))
            genesis = make_genesis(
                [OrgConfig(o, crypto.public_bytes(k)) for o, k in keys.items()], policy, self.clock.now())
            ledger = Ledger(genesis, clock=self.clock, log_path=log_path, parallel_verify=parallel_verify)
        self.ledger = ledger
        self.orderer = SoloOrderer(ledger.height, ledger.tip_digest,
                                   block_timeout=block_timeout, max_count=max_block_txs)
        self.peers: dict[str, Peer] = {}
        for org_id, key in keys.items():
            if org_id not in ledger.msp:
                raise UnknownOrg(f"{org_id} is not registered on this chain")
            self.peers[org_id] = Peer(org_id, key, ledger.state)
        self._nonce = ledger.tx_count()

    @classmethod
    def from_log(cls, path, keys: dict[str, SigningKey], *, clock=None, **kwargs) -> "Network":
        clock = clock or SystemClock()
        ledger = Ledger.from_log(path, clock=clock, parallel_verify=kwargs.pop("parallel_verify", False))
        return cls(keys, clock=clock, ledger=ledger, **kwargs)

    @property
    def msp(self) -> Msp:
        return self.ledger.msp

    @property
    def policy(self) -> Expr:
        return self.ledger.endorsement_policy

    def register_org(self, org_id: str, signing_key: SigningKey | None = None) -> OrgIdentity:
        """Admit a new organization through a configuration block."""
        key = signing_key or crypto.new_signing_key()
        Msp().register_org(org_id, crypto.public_bytes(key))  # validate before touching the chain
        if org_id in self.ledger.msp:
            raise DuplicateOrg(org_id)
        self.pump(force=True)
        block = self.orderer.config_block(
            encode_config((OrgConfig(org_id, crypto.public_bytes(key)),), ""), self.clock.now())
        self.ledger.validate_and_commit(block)
        self.peers[org_id] = Peer(org_id, key, self.ledger.state)
        return self.ledger.msp.get(org_id)

    def fork_peer_state(self, org_id: str) -> StateStore:
        """Give one peer a private copy of the state (for divergence experiments)."""
        peer = self.peers[org_id]
        peer.state = peer.state.copy()
        return peer.state

    def next_nonce(self) -> int:
        self._nonce += 1
        return self._nonce

    def propose(self, intent: Intent, issuer: str) -> TransactionProposal:
        if issuer not in self.peers:
            raise UnknownOrg(issuer)
        from ..policy.render import render_proposal  # policy.render imports the ledger package

        state = self.peers[issuer].state
        proposal = render_proposal(intent, issuer, state, self.clock.now(), self.next_nonce())
        return self.simulate(proposal)

    def simulate(self, proposal: TransactionProposal) -> TransactionProposal:
        """Issuer-side simulation; attaches the read set."""
        reads, _ = simulate_chaincode(proposal, self.peers[proposal.issuer].state)
        return proposal.with_reads(reads)

    def collect_endorsements(self, proposal: TransactionProposal, endorsers=None) -> list[Endorsement]:
        out = []
        for org_id in endorsers or list(self.peers):
            try:
                out.append(endorse(proposal, self.peers[org_id]))
            except SimulationMismatch as e:
                log.warning("endorsement skipped: %s", e)
        return out

    def submit(self, proposal: TransactionProposal, endorsements) -> Transaction:
        tx = Transaction(proposal, tuple(endorsements))
        self.orderer.submit(tx, self.clock.now(), self.policy)
        return tx

    def pump(self, force: bool = False) -> list:
        """Cut and commit every block that is due (or everything pending, with force)."""
        blocks = []
        while True:
            now = self.clock.now()
            block = self.orderer.flush(now) if force else self.orderer.cut_block(now)
            if block is None:
                return blocks
            self.ledger.validate_and_commit(block)
            blocks.append(block)

    def wait_for(self, tx_id: bytes) -> TxResult:
        while (loc := self.ledger.tx_location(tx_id)) is None:
            deadline = self.orderer.deadline()
            if deadline is None:
                raise RuntimeError("transaction is neither pending nor committed")
            self.clock.sleep_until(deadline)
            self.pump()
        return TxResult(tx_id, loc.height, loc.index, loc.status)

    def transact(self, proposal: TransactionProposal, endorsers=None, wait: bool = True) -> TxResult | Transaction:
        endorsements = self.collect_endorsements(proposal, endorsers)
        if not evaluate(self.policy, (e.endorser for e in endorsements)):
            raise PolicyUnsatisfied(
                f"collected endorsements from {sorted(e.endorser for e in endorsements)} do not satisfy the policy")
        tx = self.submit(proposal, endorsements)
        return self.wait_for(tx.tx_id) if wait else tx

    def execute(self, intent: Intent, issuer: str, endorsers=None) -> TxResult:
        return self.transact(self.propose(intent, issuer), endorsers)
