"""Digests, Ed25519 identities and the length-prefixed canonical encoding.

Every serialized ledger object is a sequence of length-prefixed fields in a
fixed order, so identical objects always produce identical bytes.
"""
from __future__ import annotations

import hashlib
import struct

from nacl.exceptions import BadSignatureError, CryptoError
from nacl.public import PrivateKey, PublicKey, SealedBox
from nacl.signing import SigningKey, VerifyKey

DIGEST_SIZE = 32
SIGNATURE_SIZE = 64
PUBLIC_KEY_SIZE = 32

_LEN = struct.Struct(">I")
_U64 = struct.Struct(">Q")


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def lp(*fields: bytes) -> bytes:
    """Concatenate fields, each prefixed with its 4-byte big-endian length."""
    out = bytearray()
    for f in fields:
        out += _LEN.pack(len(f))
        out += f
    return bytes(out)


def read_lp(buf: bytes, offset: int = 0) -> tuple[bytes, int]:
    if offset + 4 > len(buf):
        raise ValueError("truncated length prefix")
    (n,) = _LEN.unpack_from(buf, offset)
    start = offset + 4
    if start + n > len(buf):
        raise ValueError("truncated field")
    return buf[start:start + n], start + n


def split_lp(buf: bytes) -> list[bytes]:
    fields = []
    off = 0
    while off < len(buf):
        f, off = read_lp(buf, off)
        fields.append(f)
    return fields


def u64(n: int) -> bytes:
    return _U64.pack(n)


def read_u64(b: bytes) -> int:
    if len(b) != 8:
        raise ValueError("expected 8-byte integer")
    return _U64.unpack(b)[0]


def to_micros(t: float) -> int:
    return int(round(t * 1_000_000))


def new_signing_key(seed: bytes | None = None) -> SigningKey:
    if seed is None:
        return SigningKey.generate()
    return SigningKey(seed)


def seed_for(label: str) -> bytes:
    """Deterministic 32-byte key seed; scenario replays and benchmarks only."""
    return digest(b"gbpchain-seed:" + label.encode())


def public_bytes(key: SigningKey) -> bytes:
    return bytes(key.verify_key)


def load_verify_key(raw: bytes) -> VerifyKey:
    if not isinstance(raw, (bytes, bytearray)) or len(raw) != PUBLIC_KEY_SIZE:
        raise ValueError(f"public key must be {PUBLIC_KEY_SIZE} bytes")
    vk = VerifyKey(bytes(raw))
    # rejects encodings that are not curve points
    vk.to_curve25519_public_key()
    return vk


def sign(key: SigningKey, message: bytes) -> bytes:
    return key.sign(message).signature


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        VerifyKey(public_key).verify(message, signature)
        return True
    except (BadSignatureError, CryptoError, ValueError, TypeError):
        return False


def seal(public_key: bytes, plaintext: bytes) -> bytes:
    """Anonymous public-key encryption to the holder of an Ed25519 identity."""
    curve = VerifyKey(public_key).to_curve25519_public_key()
    return SealedBox(PublicKey(bytes(curve))).encrypt(plaintext)


def unseal(key: SigningKey, ciphertext: bytes) -> bytes:
    curve = key.to_curve25519_private_key()
    return SealedBox(PrivateKey(bytes(curve))).decrypt(ciphertext)
