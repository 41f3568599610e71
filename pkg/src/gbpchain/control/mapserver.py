"""Map Server, tunnel router and the user side of the authorization handshake.

A user signs a Map Request; the Map Server verifies the signature against
the key the user's organization stored on the ledger, checks the
(source, destination) pair, and hands authorized requests to the
destination's router. The router mints a security association, seals it to
the user's public key and answers with a Map Reply. Anything that fails a
check gets no answer at all.
"""
from __future__ import annotations

import hashlib
import hmac
import logging
import os
import struct
import threading
from dataclasses import dataclass, field

from nacl.exceptions import CryptoError
from nacl.signing import SigningKey

from .. import crypto
from ..clock import SystemClock
from ..policy.grammar import Action
from .trie import PolicyTrie
from .wire import MapReply, MapRequest, WireError, decode_message, encode_message

log = logging.getLogger(__name__)

DEFAULT_PORT = 4342
DEFAULT_REPLAY_WINDOW = 60.0
DEFAULT_SA_LIFETIME = 3600
CIPHER_SUITE = "chacha20-poly1305"


class DecryptFailure(Exception):
    pass


class AssociationError(Exception):
    pass


class AssociationExpired(AssociationError):
    pass


class AssociationUnknown(AssociationError):
    pass


@dataclass(frozen=True)
class AllowRecord:
    expiry: float | None = None

    def active(self, now: float) -> bool:
        return self.expiry is None or self.expiry >= now


@dataclass(frozen=True)
class SecurityAssociation:
    shared_secret: bytes
    cipher_suite: str
    lifetime: int

    def encode(self) -> bytes:
        suite = self.cipher_suite.encode()
        return self.shared_secret + struct.pack(">IB", self.lifetime, len(suite)) + suite

    @classmethod
    def decode(cls, raw: bytes) -> "SecurityAssociation":
        if len(raw) < 37:
            raise DecryptFailure("association payload too short")
        lifetime, n = struct.unpack_from(">IB", raw, 32)
        suite = raw[37:37 + n]
        if len(suite) != n or len(raw) != 37 + n:
            raise DecryptFailure("association payload has the wrong length")
        return cls(raw[:32], suite.decode(), lifetime)


def confirmation_token(sa: SecurityAssociation, nonce: int) -> bytes:
    """Proof of possession of the shared secret, presented to the router on first use."""
    return hmac.new(sa.shared_secret, b"gbp-sa-confirm" + nonce.to_bytes(8, "big"), hashlib.sha256).digest()


def establish_association(reply: MapReply, user_key: SigningKey) -> SecurityAssociation:
    try:
        plaintext = crypto.unseal(user_key, reply.payload)
    except (CryptoError, ValueError, TypeError) as e:
        raise DecryptFailure(f"cannot open Map Reply payload: {e}") from None
    return SecurityAssociation.decode(plaintext)


class Router:
    """Destination-side tunnel router: generates and tracks security associations."""

    def __init__(self, org: str = "", *, clock=None, lifetime: int = DEFAULT_SA_LIFETIME,
                 cipher_suite: str = CIPHER_SUITE):
        self.org = org
        self.clock = clock or SystemClock()
        self.lifetime = lifetime
        self.cipher_suite = cipher_suite
        self._sas: dict[int, tuple[SecurityAssociation, str, float]] = {}
        self._lock = threading.Lock()

    def issue(self, request: MapRequest, user_public_key: bytes, now: float | None = None) -> MapReply:
        now = self.clock.now() if now is None else now
        sa = SecurityAssociation(os.urandom(32), self.cipher_suite, self.lifetime)
        with self._lock:
            self._sas[request.nonce] = (sa, request.user_ref, now)
        payload = crypto.seal(user_public_key, sa.encode())
        return MapReply(request.nonce, request.source_eid, request.dest_eid, payload)

    def association(self, nonce: int) -> SecurityAssociation:
        with self._lock:
            try:
                return self._sas[nonce][0]
            except KeyError:
                raise AssociationUnknown(nonce) from None

    def confirm(self, nonce: int, token: bytes, now: float | None = None) -> SecurityAssociation:
        """Accept a connection using the association minted for `nonce`."""
        now = self.clock.now() if now is None else now
        with self._lock:
            entry = self._sas.get(nonce)
        if entry is None:
            raise AssociationUnknown(nonce)
        sa, _, issued = entry
        if now > issued + sa.lifetime:
            raise AssociationExpired(f"association {nonce:#x} expired")
        if not hmac.compare_digest(token, confirmation_token(sa, nonce)):
            raise AssociationError("bad confirmation token")
        return sa


class NonceCache:
    """Sliding-window replay filter keyed on (user, nonce)."""

    def __init__(self, window: float = DEFAULT_REPLAY_WINDOW):
        self.window = window
        self._seen: dict[tuple[str, int], float] = {}
        self._lock = threading.Lock()

    def admit(self, user_ref: str, nonce: int, now: float) -> bool:
        key = (user_ref, nonce)
        with self._lock:
            if len(self._seen) > 4096:
                cutoff = now - self.window
                self._seen = {k: t for k, t in self._seen.items() if t >= cutoff}
            seen = self._seen.get(key)
            if seen is not None and now - seen <= self.window:
                return False
            self._seen[key] = now
            return True


@dataclass(frozen=True)
class Event:
    code: str
    nonce: int
    user_ref: str
    detail: str = ""


@dataclass
class EventLog:
    events: list = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    def record(self, code: str, nonce: int = 0, user_ref: str = "", detail: str = "") -> None:
        with self._lock:
            self.events.append(Event(code, nonce, user_ref, detail))
        log.debug("%s nonce=%x user=%s %s", code, nonce, user_ref, detail)

    def codes(self) -> list[str]:
        return [e.code for e in self.events]

    def count(self, code: str) -> int:
        return sum(1 for e in self.events if e.code == code)


DENY_CODES = ("BadSignature", "UnknownUser", "NoPolicy", "Expired", "Replay", "SourceMismatch", "Malformed")


@dataclass(frozen=True)
class SyncResult:
    added: int
    removed: int
    changed: int
    size: int


class MapServer:
    """mode="trie": authorize from the synced trie (fast path).
    mode="ledger": ask the ledger for every request (slow path).
    """

    def __init__(self, ledger, router: Router, *, mode: str = "trie", clock=None,
                 replay_window: float = DEFAULT_REPLAY_WINDOW, transport=None):
        if mode not in ("trie", "ledger"):
            raise ValueError("mode must be 'trie' or 'ledger'")
        self.ledger = ledger
        self.router = router
        self.mode = mode
        self.clock = clock or SystemClock()
        self.nonces = NonceCache(replay_window)
        self.events = EventLog()
        self.transport = transport
        self.trie = PolicyTrie()
        self._users: dict[str, tuple[bytes, int | None]] = {}
        self._sync_lock = threading.Lock()

    def sync_from_ledger(self, snapshot, users=None) -> SyncResult:
        """Make the trie hold exactly the snapshot's (src-eid, dst-eid, expiry) entries.

        The new trie is built aside and swapped in, so concurrent lookups see
        either the old or the new contents, never a mix.
        """
        wanted = {(s, d): AllowRecord(e) for s, d, e in snapshot}
        with self._sync_lock:
            current = self.trie.pairs()
            added = sum(1 for k in wanted if k not in current)
            removed = sum(1 for k in current if k not in wanted)
            changed = sum(1 for k, v in wanted.items() if k in current and current[k] != v)
            if added or removed or changed:
                fresh = PolicyTrie()
                for (s, d), rec in sorted(wanted.items()):  # key order keeps path nodes close in memory
                    fresh.insert(s, d, rec)
                self.trie = fresh
            if users is not None:
                self._users = dict(users)
        return SyncResult(added, removed, changed, len(wanted))

    def sync(self, now: float | None = None) -> SyncResult:
        return self.sync_from_ledger(self.ledger.export_eid_snapshot(now), self.ledger.export_user_directory())

    def _user(self, user_ref: str) -> tuple[bytes | None, int | None]:
        if self.mode == "trie":
            return self._users.get(user_ref, (None, None))
        return self.ledger.get_user_pubkey(user_ref), self.ledger.get_user_eid(user_ref)

    def authorize(self, user_ref: str, src_eid: int, dst_eid: int, now: float) -> str:
        """Return "Allow", "NoPolicy" or "Expired" for an already authenticated request."""
        if self.mode == "trie":
            rec = self.trie.lookup(src_eid, dst_eid).value
            if rec is None:
                return "NoPolicy"
            return "Allow" if rec.active(now) else "Expired"
        action, reason = self.ledger.access_decision_eid(user_ref, dst_eid, now)
        if action is Action.ALLOW:
            return "Allow"
        return "Expired" if reason == "Expired" else "NoPolicy"

    def handle_map_request(self, msg: MapRequest, now: float | None = None) -> MapReply | None:
        """MapReply for an authorized, correctly signed, fresh request; None (silence) otherwise."""
        now = self.clock.now() if now is None else now
        ref, nonce = msg.user_ref, msg.nonce
        public_key, user_eid = self._user(ref)
        if public_key is None:
            self.events.record("UnknownUser", nonce, ref)
            return None
        if not crypto.verify(public_key, msg.signed_bytes(), msg.signature):
            self.events.record("BadSignature", nonce, ref)
            return None
        self.events.record("Verified", nonce, ref)
        if not self.nonces.admit(ref, nonce, now):
            self.events.record("Replay", nonce, ref)
            return None
        if user_eid != msg.source_eid:
            self.events.record("SourceMismatch", nonce, ref, f"registered eid {user_eid}")
            return None
        verdict = self.authorize(ref, msg.source_eid, msg.dest_eid, now)
        if verdict != "Allow":
            self.events.record(verdict, nonce, ref)
            return None
        reply = self.router.issue(msg, public_key, now)
        self.events.record("Replied", nonce, ref)
        return reply

    def handle_datagram(self, frame: bytes, addr=None, now: float | None = None) -> bytes | None:
        try:
            msg = decode_message(frame)
        except WireError as e:
            self.events.record("Malformed", detail=type(e).__name__)
            return None
        if not isinstance(msg, MapRequest):
            self.events.record("Malformed", msg.nonce, detail="unexpected Map Reply")
            return None
        reply = self.handle_map_request(msg, now)
        if reply is None:
            return None
        data = encode_message(reply)
        if self.transport is not None:
            self.transport.send(data, addr)
        return data


class UserAgent:
    """The requesting user: holds the private key its organization registered."""

    def __init__(self, user_ref: str, signing_key: SigningKey, eid: int):
        self.user_ref = user_ref
        self.signing_key = signing_key
        self.eid = eid
        self.pending: dict[int, int] = {}

    @property
    def public_key_hex(self) -> str:
        return crypto.public_bytes(self.signing_key).hex()

    def map_request(self, dest_eid: int, nonce: int | None = None) -> MapRequest:
        nonce = int.from_bytes(os.urandom(8), "big") if nonce is None else nonce
        unsigned = MapRequest(nonce, self.eid, dest_eid, self.user_ref)
        sig = crypto.sign(self.signing_key, unsigned.signed_bytes())
        self.pending[nonce] = dest_eid
        return MapRequest(nonce, self.eid, dest_eid, self.user_ref, sig)

    def accept_reply(self, reply: MapReply) -> SecurityAssociation:
        if self.pending.pop(reply.nonce, None) is None:
            raise AssociationUnknown(f"no outstanding request with nonce {reply.nonce:#x}")
        return establish_association(reply, self.signing_key)
