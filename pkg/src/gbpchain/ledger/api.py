"""Ledger query API over a local stream socket (see docs/ledger-api.md).

Each record is a 4-byte big-endian length followed by a UTF-8 JSON object.
Requests carry "op" plus arguments; responses are {"ok": true, "result": ...}
or {"ok": false, "error": <type name>, "message": ...}.
"""
from __future__ import annotations

import json
import logging
import socket
import socketserver
import struct
import threading

from ..policy.grammar import Action
from .assets import Asset

log = logging.getLogger(__name__)

_LEN = struct.Struct(">I")
MAX_RECORD = 64 * 1024 * 1024


class TransportFailure(Exception):
    pass


class RemoteError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.message = message


def send_record(sock: socket.socket, obj) -> None:
    data = json.dumps(obj, separators=(",", ":")).encode()
    sock.sendall(_LEN.pack(len(data)) + data)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None if not buf else bytes(buf)
        buf += chunk
    return bytes(buf)


def recv_record(sock: socket.socket):
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    if len(head) < 4:
        raise TransportFailure("connection closed mid-header")
    (n,) = _LEN.unpack(head)
    if n > MAX_RECORD:
        raise TransportFailure(f"record of {n} bytes exceeds limit")
    body = _recv_exact(sock, n)
    if body is None or len(body) != n:
        raise TransportFailure("connection closed mid-record")
    return json.loads(body)


def _asset_doc(asset: Asset | None):
    return None if asset is None else json.loads(asset.to_bytes())


def dispatch(ledger, request: dict, executor=None):
    """Run one API request against an in-process Ledger."""
    op = request.get("op")
    now = request.get("now")
    if op == "get_policy":
        return _asset_doc(ledger.get_policy(request["src"], request["dst"], now))
    if op == "query_raw":
        raw = ledger.query_raw(request["key"])
        return None if raw is None else raw.hex()
    if op == "query_state":
        return _asset_doc(ledger.query_state(request["key"]))
    if op == "get_user_pubkey":
        key = ledger.get_user_pubkey(request["user"])
        return None if key is None else key.hex()
    if op == "get_user_eid":
        return ledger.get_user_eid(request["user"])
    if op == "export_policy_snapshot":
        return [[s, d, a.value] for s, d, a in ledger.export_policy_snapshot(now)]
    if op == "export_eid_snapshot":
        return [list(t) for t in ledger.export_eid_snapshot(now)]
    if op == "export_user_directory":
        return {ref: [key.hex(), eid] for ref, (key, eid) in ledger.export_user_directory().items()}
    if op == "access_decision_eid":
        action, reason = ledger.access_decision_eid(request["user"], request["dst_eid"], now)
        return [action.value, reason]
    if op == "resolve_access":
        return ledger.resolve_access(request["user"], request["resource"], now).value
    if op == "height":
        return ledger.height
    if op == "execute" and executor is not None:
        return executor(request)
    raise ValueError(f"unknown op {op!r}")


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server = self.server
        while True:
            try:
                request = recv_record(self.request)
            except (TransportFailure, ValueError, OSError):
                return
            if request is None:
                return
            try:
                with server.op_lock:
                    result = dispatch(server.ledger, request, server.executor)
                response = {"ok": True, "result": result}
            except Exception as e:  # reported to the client, never fatal to the server
                response = {"ok": False, "error": type(e).__name__, "message": str(e)}
            try:
                send_record(self.request, response)
            except OSError:
                return


class LedgerServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, ledger, address=("127.0.0.1", 0), executor=None):
        super().__init__(address, _Handler)
        self.ledger = ledger
        self.executor = executor
        self.op_lock = threading.Lock()

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="ledger-api", daemon=True)
        t.start()
        return t

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"tcp://{host}:{port}"


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    if not endpoint.startswith("tcp://"):
        raise ValueError(f"not a tcp:// endpoint: {endpoint!r}")
    host, _, port = endpoint[len("tcp://"):].rpartition(":")
    return host or "127.0.0.1", int(port)


class LedgerClient:
    """Remote stand-in for Ledger's query surface."""

    def __init__(self, endpoint: str, timeout: float = 5.0):
        self.address = parse_endpoint(endpoint)
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._lock = threading.Lock()

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection(self.address, timeout=self.timeout)
                self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            except OSError as e:
                raise TransportFailure(f"cannot reach ledger at {self.address}: {e}") from None
        return self._sock

    def call(self, op: str, **args):
        with self._lock:
            sock = self._connect()
            try:
                send_record(sock, {"op": op, **args})
                response = recv_record(sock)
            except (OSError, ValueError) as e:
                self.close()
                raise TransportFailure(str(e)) from None
            if response is None:
                self.close()
                raise TransportFailure("ledger closed the connection")
        if not response.get("ok"):
            raise RemoteError(response.get("error", "Error"), response.get("message", ""))
        return response["result"]

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def get_policy(self, src, dst, now=None):
        doc = self.call("get_policy", src=src, dst=dst, now=now)
        return None if doc is None else Asset.from_bytes(json.dumps(doc).encode())

    query_policy = get_policy

    def query_state(self, key):
        doc = self.call("query_state", key=key)
        return None if doc is None else Asset.from_bytes(json.dumps(doc).encode())

    def query_raw(self, key):
        raw = self.call("query_raw", key=key)
        return None if raw is None else bytes.fromhex(raw)

    def get_user_pubkey(self, user_ref):
        key = self.call("get_user_pubkey", user=user_ref)
        return None if key is None else bytes.fromhex(key)

    def get_user_eid(self, user_ref):
        return self.call("get_user_eid", user=user_ref)

    def export_policy_snapshot(self, now=None):
        return [(s, d, Action(a)) for s, d, a in self.call("export_policy_snapshot", now=now)]

    def export_eid_snapshot(self, now=None):
        return [tuple(t) for t in self.call("export_eid_snapshot", now=now)]

    def export_user_directory(self):
        return {ref: (bytes.fromhex(k), eid) for ref, (k, eid) in self.call("export_user_directory").items()}

    def access_decision_eid(self, user_ref, dst_eid, now=None):
        action, reason = self.call("access_decision_eid", user=user_ref, dst_eid=dst_eid, now=now)
        return Action(action), reason

    def resolve_access(self, user_ref, resource_ref, now=None):
        return Action(self.call("resolve_access", user=user_ref, resource=resource_ref, now=now))

    @property
    def height(self):
        return self.call("height")
