"""Proposals, endorsements, transactions and blocks with their canonical encodings."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property

from ..crypto import DIGEST_SIZE, digest, lp, read_u64, split_lp, to_micros, u64

ZERO_DIGEST = bytes(DIGEST_SIZE)


class WriteMode(enum.IntEnum):
    CREATE = 1
    UPDATE = 2
    DELETE = 3


class CutReason(enum.IntEnum):
    GENESIS = 0
    TIMEOUT = 1
    MAX_COUNT = 2
    CONFIG = 3
    FLUSH = 4


class TxStatus(enum.IntEnum):
    VALID = 0
    ENDORSEMENT_POLICY_FAILURE = 1
    MVCC_READ_CONFLICT = 2
    BAD_PROPOSAL = 3
    OWNERSHIP_VIOLATION = 4


Version = tuple[int, int]


@dataclass(frozen=True)
class Write:
    key: str
    mode: WriteMode
    value: bytes = b""

    def encode(self) -> bytes:
        return lp(self.key.encode(), bytes([self.mode]), self.value)

    @classmethod
    def decode(cls, raw: bytes) -> "Write":
        key, mode, value = split_lp(raw)
        return cls(key.decode(), WriteMode(mode[0]), value)


@dataclass(frozen=True)
class Read:
    key: str
    version: Version | None

    def encode(self) -> bytes:
        if self.version is None:
            return lp(self.key.encode(), b"\x00", u64(0), u64(0))
        return lp(self.key.encode(), b"\x01", u64(self.version[0]), u64(self.version[1]))

    @classmethod
    def decode(cls, raw: bytes) -> "Read":
        key, present, h, i = split_lp(raw)
        version = (read_u64(h), read_u64(i)) if present == b"\x01" else None
        return cls(key.decode(), version)


def rwset_digest(reads: tuple[Read, ...], writes: tuple[Write, ...]) -> bytes:
    return digest(lp(lp(*(r.encode() for r in reads)), lp(*(w.encode() for w in writes))))


@dataclass(frozen=True)
class TransactionProposal:
    issuer: str
    writes: tuple[Write, ...]
    timestamp: float
    nonce: int
    reads: tuple[Read, ...] = ()

    def __post_init__(self):
        if not self.writes:
            raise ValueError("a proposal must write at least one key")

    def header_bytes(self) -> bytes:
        return lp(self.issuer.encode(), u64(to_micros(self.timestamp)), u64(self.nonce),
                  lp(*(w.encode() for w in self.writes)))

    # cached: proposals are immutable and these are needed once per endorser
    @cached_property
    def proposal_id(self) -> bytes:
        return digest(self.header_bytes())

    @cached_property
    def rwset_digest(self) -> bytes:
        return rwset_digest(self.reads, self.writes)

    def with_reads(self, reads) -> "TransactionProposal":
        return replace(self, reads=tuple(reads))

    def encode(self) -> bytes:
        return lp(self.header_bytes(), lp(*(r.encode() for r in self.reads)))

    @classmethod
    def decode(cls, raw: bytes) -> "TransactionProposal":
        header, reads = split_lp(raw)
        issuer, ts, nonce, writes = split_lp(header)
        return cls(
            issuer.decode(),
            tuple(Write.decode(w) for w in split_lp(writes)),
            read_u64(ts) / 1_000_000,
            read_u64(nonce),
            tuple(Read.decode(r) for r in split_lp(reads)),
        )


def endorsement_message(proposal: TransactionProposal) -> bytes:
    return proposal.proposal_id + proposal.rwset_digest


@dataclass(frozen=True)
class Endorsement:
    endorser: str
    signature: bytes

    def encode(self) -> bytes:
        return lp(self.endorser.encode(), self.signature)

    @classmethod
    def decode(cls, raw: bytes) -> "Endorsement":
        org, sig = split_lp(raw)
        return cls(org.decode(), sig)


@dataclass(frozen=True)
class Transaction:
    proposal: TransactionProposal
    endorsements: tuple[Endorsement, ...]

    @property
    def tx_id(self) -> bytes:
        return self.proposal.proposal_id

    def encode(self) -> bytes:
        return lp(self.proposal.encode(), lp(*(e.encode() for e in self.endorsements)))

    @classmethod
    def decode(cls, raw: bytes) -> "Transaction":
        prop, ends = split_lp(raw)
        return cls(TransactionProposal.decode(prop), tuple(Endorsement.decode(e) for e in split_lp(ends)))


@dataclass(frozen=True)
class OrgConfig:
    org_id: str
    public_key: bytes


def encode_config(orgs: tuple[OrgConfig, ...], policy_text: str) -> bytes:
    return lp(lp(*(lp(o.org_id.encode(), o.public_key) for o in orgs)), policy_text.encode())


def decode_config(raw: bytes) -> tuple[tuple[OrgConfig, ...], str]:
    orgs, policy = split_lp(raw)
    out = []
    for entry in split_lp(orgs):
        org, key = split_lp(entry)
        out.append(OrgConfig(org.decode(), key))
    return tuple(out), policy.decode()


@dataclass
class Block:
    height: int
    prev_digest: bytes
    cut_reason: CutReason
    cut_time: float
    transactions: tuple[Transaction, ...] = ()
    config: bytes = b""
    # filled in by validation; part of the stored record, not of the digest
    statuses: tuple[TxStatus, ...] | None = None
    _payload: bytes | None = field(default=None, repr=False, compare=False)

    def payload(self) -> bytes:
        if self._payload is None:
            self._payload = lp(*(t.encode() for t in self.transactions))
        return self._payload

    def header_bytes(self) -> bytes:
        return lp(u64(self.height), self.prev_digest, bytes([self.cut_reason]),
                  u64(to_micros(self.cut_time)), digest(self.payload()), digest(self.config))

    @property
    def digest(self) -> bytes:
        return digest(self.header_bytes())

    def encode(self) -> bytes:
        flags = bytes(self.statuses) if self.statuses is not None else b""
        return lp(self.header_bytes(), self.payload(), self.config, flags)

    @classmethod
    def decode(cls, raw: bytes) -> "Block":
        header, payload, config, flags = split_lp(raw)
        height, prev, reason, cut_time, payload_digest, config_digest = split_lp(header)
        if digest(payload) != payload_digest or digest(config) != config_digest:
            raise ValueError("block body does not match its header")
        block = cls(
            read_u64(height), prev, CutReason(reason[0]), read_u64(cut_time) / 1_000_000,
            tuple(Transaction.decode(t) for t in split_lp(payload)), config,
            tuple(TxStatus(f) for f in flags) if flags else None,
        )
        block._payload = payload
        return block
