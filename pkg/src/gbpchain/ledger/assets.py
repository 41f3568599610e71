"""Ledger assets and the state-key scheme.

    user:<org>.<name>    dept:<org>.<name>    res:<org>.<name>    policy:<src>|<dst>

Values are canonical JSON (sorted keys, no whitespace) so equal assets are
byte-identical in every replica.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any


class AssetKind(enum.Enum):
    USER = "user"
    DEPARTMENT = "dept"
    RESOURCE = "res"
    POLICY = "policy"


ENDPOINT_KINDS = (AssetKind.USER, AssetKind.DEPARTMENT, AssetKind.RESOURCE)


def asset_key(kind: AssetKind, ref: str) -> str:
    return f"{kind.value}:{ref}"


def policy_key(src_ref: str, dst_ref: str) -> str:
    return f"policy:{src_ref}|{dst_ref}"


def split_key(key: str) -> tuple[AssetKind, str]:
    prefix, _, rest = key.partition(":")
    return AssetKind(prefix), rest


def ref_org(ref: str) -> str:
    return ref.partition(".")[0]


@dataclass(frozen=True)
class Member:
    ref: str
    expiry: float | None = None

    def active(self, now: float) -> bool:
        return self.expiry is None or self.expiry >= now


@dataclass(frozen=True)
class User:
    org: str
    name: str
    public_key: str = ""
    ip: str = ""
    department: str = ""

    @property
    def ref(self) -> str:
        return f"{self.org}.{self.name}"


@dataclass(frozen=True)
class Department:
    org: str
    name: str
    members: tuple[Member, ...] = ()

    @property
    def ref(self) -> str:
        return f"{self.org}.{self.name}"


@dataclass(frozen=True)
class Resource:
    org: str
    name: str
    ip: str

    @property
    def ref(self) -> str:
        return f"{self.org}.{self.name}"


@dataclass(frozen=True)
class Policy:
    src: str
    dst: str
    action: str
    name: str = ""
    created: float = 0.0
    expiry: float | None = None

    def active(self, now: float) -> bool:
        return self.expiry is None or self.expiry >= now


_BODY_TYPES = {
    AssetKind.USER: User,
    AssetKind.DEPARTMENT: Department,
    AssetKind.RESOURCE: Resource,
    AssetKind.POLICY: Policy,
}


@dataclass(frozen=True)
class Asset:
    kind: AssetKind
    key: str
    owner: str
    body: Any = field(compare=True)

    def to_bytes(self) -> bytes:
        body = dict(self.body.__dict__)
        if self.kind is AssetKind.DEPARTMENT:
            body["members"] = [{"ref": m.ref, "expiry": m.expiry} for m in self.body.members]
        doc = {"kind": self.kind.value, "key": self.key, "owner": self.owner, "body": body}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Asset":
        doc = json.loads(raw)
        kind = AssetKind(doc["kind"])
        body = doc["body"]
        if kind is AssetKind.DEPARTMENT:
            body["members"] = tuple(Member(**m) for m in body["members"])
        return cls(kind, doc["key"], doc["owner"], _BODY_TYPES[kind](**body))

    def validate(self) -> None:
        """Structural invariants; raises ValueError."""
        kind, rest = split_key(self.key)
        if kind is not self.kind:
            raise ValueError(f"key {self.key!r} does not match kind {self.kind.value}")
        if self.kind is AssetKind.POLICY:
            if self.key != policy_key(self.body.src, self.body.dst):
                raise ValueError("policy key must be policy:<src>|<dst>")
            if self.body.expiry is not None and self.body.expiry <= self.body.created:
                raise ValueError("policy expiry must be after creation")
        else:
            if rest != self.body.ref:
                raise ValueError(f"key {self.key!r} does not match body {self.body.ref!r}")
            if self.owner != self.body.org:
                raise ValueError("asset owner must equal the organization in its body")


def make_user(org, name, public_key="", ip="", department="") -> Asset:
    body = User(org, name, public_key, ip, department)
    return Asset(AssetKind.USER, asset_key(AssetKind.USER, body.ref), org, body)


def make_department(org, name, members=()) -> Asset:
    body = Department(org, name, tuple(members))
    return Asset(AssetKind.DEPARTMENT, asset_key(AssetKind.DEPARTMENT, body.ref), org, body)


def make_resource(org, name, ip) -> Asset:
    body = Resource(org, name, ip)
    return Asset(AssetKind.RESOURCE, asset_key(AssetKind.RESOURCE, body.ref), org, body)


def make_policy(owner, src, dst, action="allow", name="", created=0.0, expiry=None) -> Asset:
    body = Policy(src, dst, action, name, created, expiry)
    return Asset(AssetKind.POLICY, policy_key(src, dst), owner, body)
