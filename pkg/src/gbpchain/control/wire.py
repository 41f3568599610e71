"""Map Request / Map Reply frames (see docs/wire.md). All integers big-endian.

    0      version (1B)
    1      type (1B): 1 = Map Request, 2 = Map Reply
    2-9    nonce (8B)
    10-13  source eid (4B)
    14-17  destination eid (4B)
    type 1: user-ref length (2B), user-ref (UTF-8), signature (64B) over bytes 0..end of user-ref
    type 2: payload length (2B), sealed payload
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from ..crypto import SIGNATURE_SIZE

VERSION = 1
MAP_REQUEST = 1
MAP_REPLY = 2

_HEADER = struct.Struct(">BBQII")
_LEN = struct.Struct(">H")
MAX_FIELD = 0xFFFF


class WireError(Exception):
    pass


class MalformedFrame(WireError):
    pass


class UnknownType(WireError):
    pass


class BadVersion(WireError):
    pass


@dataclass(frozen=True)
class MapRequest:
    nonce: int
    source_eid: int
    dest_eid: int
    user_ref: str
    signature: bytes = bytes(SIGNATURE_SIZE)
    version: int = VERSION

    def signed_bytes(self) -> bytes:
        ref = self.user_ref.encode("utf-8")
        if len(ref) > MAX_FIELD:
            raise MalformedFrame("user-ref too long")
        return _HEADER.pack(self.version, MAP_REQUEST, self.nonce, self.source_eid, self.dest_eid) \
            + _LEN.pack(len(ref)) + ref


@dataclass(frozen=True)
class MapReply:
    nonce: int
    source_eid: int
    dest_eid: int
    payload: bytes
    version: int = VERSION


def encode_message(msg: MapRequest | MapReply) -> bytes:
    if isinstance(msg, MapRequest):
        if len(msg.signature) != SIGNATURE_SIZE:
            raise MalformedFrame("signature must be 64 bytes")
        return msg.signed_bytes() + msg.signature
    if isinstance(msg, MapReply):
        if len(msg.payload) > MAX_FIELD:
            raise MalformedFrame("payload too long")
        return _HEADER.pack(msg.version, MAP_REPLY, msg.nonce, msg.source_eid, msg.dest_eid) \
            + _LEN.pack(len(msg.payload)) + msg.payload
    raise TypeError(f"cannot encode {type(msg).__name__}")


def decode_message(frame: bytes) -> MapRequest | MapReply:
    """Inverse of encode_message; rejects truncated and over-long frames."""
    if len(frame) < 2:
        raise MalformedFrame("frame shorter than version+type")
    if frame[0] != VERSION:
        raise BadVersion(f"version {frame[0]}")
    if frame[1] not in (MAP_REQUEST, MAP_REPLY):
        raise UnknownType(f"type {frame[1]}")
    if len(frame) < _HEADER.size + _LEN.size:
        raise MalformedFrame("truncated header")
    version, kind, nonce, src, dst = _HEADER.unpack_from(frame)
    (n,) = _LEN.unpack_from(frame, _HEADER.size)
    body = _HEADER.size + _LEN.size
    if kind == MAP_REQUEST:
        if len(frame) != body + n + SIGNATURE_SIZE:
            raise MalformedFrame(f"request length {len(frame)} != {body + n + SIGNATURE_SIZE}")
        try:
            ref = frame[body:body + n].decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedFrame("user-ref is not UTF-8") from None
        return MapRequest(nonce, src, dst, ref, bytes(frame[body + n:]), version)
    if len(frame) != body + n:
        raise MalformedFrame(f"reply length {len(frame)} != {body + n}")
    return MapReply(nonce, src, dst, bytes(frame[body:]), version)
