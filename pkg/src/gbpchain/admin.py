"""Executing GBP command lines against a network, shared by the CLI, the
ledger server and the scenario runner.

Exit codes: 0 ok, 1 parse/usage error, 2 chaincode rejection,
3 endorsement policy unsatisfied, 4 transport failure.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock, Timeout

from . import crypto
from .clock import SystemClock
from .ledger.api import RemoteError, TransportFailure
from .ledger.assets import AssetKind, asset_key
from .ledger.endorsement import parse_policy, to_text
from .ledger.errors import (ChaincodeRejection, InvalidKey, LedgerError, PolicyUnsatisfied, SimulationMismatch,
                            UnknownOrg, UnresolvableReference)
from .ledger.network import Network
from .policy.grammar import Intent, ParseError, Verb, parse_command, qualify
from .ledger.tx import TxStatus

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_REJECTED = 2
EXIT_ENDORSEMENT = 3
EXIT_TRANSPORT = 4

_REJECTIONS = (ChaincodeRejection, UnresolvableReference)

_STATUS_EXIT = {
    TxStatus.VALID: EXIT_OK,
    TxStatus.ENDORSEMENT_POLICY_FAILURE: EXIT_ENDORSEMENT,
    TxStatus.MVCC_READ_CONFLICT: EXIT_REJECTED,
    TxStatus.BAD_PROPOSAL: EXIT_REJECTED,
    TxStatus.OWNERSHIP_VIOLATION: EXIT_REJECTED,
}

_REMOTE_EXIT = {
    "ParseError": EXIT_PARSE, "UnknownVerb": EXIT_PARSE, "MalformedOption": EXIT_PARSE,
    "IllegalOption": EXIT_PARSE, "MissingRequired": EXIT_PARSE, "MalformedDuration": EXIT_PARSE,
    "InvalidName": EXIT_PARSE, "UnexpectedToken": EXIT_PARSE, "InvalidEncoding": EXIT_PARSE,
    "UnknownOrg": EXIT_PARSE, "AuthenticationFailed": EXIT_PARSE,
    "OwnershipViolation": EXIT_REJECTED, "KeyExists": EXIT_REJECTED, "KeyAbsent": EXIT_REJECTED,
    "InvalidAsset": EXIT_REJECTED, "UnresolvableReference": EXIT_REJECTED,
    "PolicyUnsatisfied": EXIT_ENDORSEMENT, "SimulationMismatch": EXIT_ENDORSEMENT,
}


@dataclass
class Outcome:
    code: int
    record: dict = field(default_factory=dict)

    def human(self) -> str:
        r = self.record
        if "error" in r:
            return f"error {r['error']}: {r.get('message', '')}"
        if r.get("status") == "committed":
            return f"committed tx={r['tx'][:16]} block={r['height']}"
        if r.get("status") == "invalid":
            return f"invalid tx={r['tx'][:16]} block={r['height']} reason={r['reason']}"
        return json.dumps(r, sort_keys=True, separators=(",", ":"))

    def json(self) -> str:
        return json.dumps(self.record, sort_keys=True, separators=(",", ":"))


def error_outcome(code: int, e: Exception) -> Outcome:
    return Outcome(code, {"error": type(e).__name__, "message": str(e)})


def show(ledger, intent: Intent, issuer: str = "") -> dict:
    o = intent.options
    if intent.subject == "access":
        action, reason = ledger.access_decision(qualify(o.src, issuer), qualify(o.dst, issuer))
        return {"src": qualify(o.src, issuer), "dst": qualify(o.dst, issuer), "access": action.value, "reason": reason}
    if intent.subject == "policy":
        asset = ledger.query_policy(qualify(o.src, issuer), qualify(o.dst, issuer))
    else:
        kind = {"member": AssetKind.USER, "group": AssetKind.DEPARTMENT, "resource": AssetKind.RESOURCE}[intent.subject]
        asset = ledger.query_state(asset_key(kind, qualify(o.name, issuer)))
    if asset is None:
        return {"found": False}
    return {"found": True, **json.loads(asset.to_bytes())}


def execute_intent(network: Network, intent: Intent, issuer: str) -> Outcome:
    if intent.verb is Verb.QUERY:
        return Outcome(EXIT_OK, show(network.ledger, intent, issuer))
    try:
        result = network.execute(intent, issuer)
    except _REJECTIONS as e:
        return error_outcome(EXIT_REJECTED, e)
    except (PolicyUnsatisfied, SimulationMismatch) as e:
        return error_outcome(EXIT_ENDORSEMENT, e)
    except UnknownOrg as e:
        return error_outcome(EXIT_PARSE, e)
    record = {"tx": result.tx_id.hex(), "height": result.height, "index": result.index}
    if result.valid:
        record["status"] = "committed"
    else:
        record.update(status="invalid", reason=result.status.name)
    return Outcome(_STATUS_EXIT[result.status], record)


def execute_line(network: Network, line: str, issuer: str) -> Outcome:
    try:
        intent = parse_command(line)
    except ParseError as e:
        return error_outcome(EXIT_PARSE, e)
    return execute_intent(network, intent, issuer)


def remote_outcome(e: Exception) -> Outcome:
    if isinstance(e, TransportFailure):
        return error_outcome(EXIT_TRANSPORT, e)
    if isinstance(e, RemoteError):
        return Outcome(_REMOTE_EXIT.get(e.kind, EXIT_REJECTED), {"error": e.kind, "message": e.message})
    raise e


def load_key(path) -> "crypto.SigningKey":
    text = Path(path).read_text().strip()
    try:
        seed = bytes.fromhex(text)
    except ValueError:
        raise InvalidKey(f"{path}: key file must hold a 64-character hex seed") from None
    if len(seed) != 32:
        raise InvalidKey(f"{path}: key seed must be 32 bytes")
    return crypto.new_signing_key(seed)


def write_key(path, key) -> None:
    path = Path(path)
    path.write_text(bytes(key).hex() + "\n")
    path.chmod(0o600)


class Deployment:
    """A simulated network on disk: network.json, chain.log and keys/<org>.key.

    Every organization's peer runs in-process, so the directory holds every
    org's signing key. Commands from several processes serialize on a file lock.
    """

    def __init__(self, directory, clock=None, lock_timeout: float = 30.0):
        self.dir = Path(directory)
        self.clock = clock or SystemClock()
        self.lock = FileLock(str(self.dir / ".lock"), timeout=lock_timeout)
        if not (self.dir / "network.json").exists():
            raise TransportFailure(f"{self.dir} is not an initialized ledger directory")
        self.config = json.loads((self.dir / "network.json").read_text())

    @property
    def log_path(self) -> Path:
        return self.dir / "chain.log"

    def key_path(self, org: str) -> Path:
        return self.dir / "keys" / f"{org}.key"

    @classmethod
    def init(cls, directory, orgs, policy: str = "", clock=None) -> "Deployment":
        d = Path(directory)
        (d / "keys").mkdir(parents=True, exist_ok=True)
        if (d / "chain.log").exists():
            raise FileExistsError(f"{d / 'chain.log'} already exists")
        if policy:
            policy = to_text(parse_policy(policy))
        keys = {}
        for org in orgs:
            keys[org] = crypto.new_signing_key()
            write_key(d / "keys" / f"{org}.key", keys[org])
        Network(keys, policy=policy or None, clock=clock, log_path=d / "chain.log")
        (d / "network.json").write_text(json.dumps({"orgs": list(orgs), "policy": policy}, indent=2) + "\n")
        return cls(d, clock)

    def open(self) -> Network:
        keys = {org: load_key(self.key_path(org)) for org in self.config["orgs"]}
        return Network.from_log(self.log_path, keys, clock=self.clock)

    def check_identity(self, network: Network, org: str, key) -> None:
        if org not in network.msp:
            raise UnknownOrg(f"organization {org!r} is not registered")
        if key is not None and crypto.public_bytes(key) != network.msp.get(org).public_key:
            raise InvalidKey(f"key does not match the registered identity of {org}")

    def execute(self, line: str, org: str, key=None) -> Outcome:
        try:
            intent = parse_command(line)
        except ParseError as e:
            return error_outcome(EXIT_PARSE, e)
        try:
            with self.lock:
                network = self.open()
                try:
                    self.check_identity(network, org, key)
                except (UnknownOrg, InvalidKey) as e:
                    return error_outcome(EXIT_PARSE, e)
                return execute_intent(network, intent, org)
        except Timeout as e:
            return error_outcome(EXIT_TRANSPORT, e)
        except (OSError, ValueError, LedgerError) as e:
            # unreadable or corrupt ledger directory
            return error_outcome(EXIT_TRANSPORT, e)
