"""`gbp`: administrator command line.

    gbp [--org X] [--key FILE] [--endpoint DIR|tcp://HOST:PORT] [--json] <verb> NAME [--opt value ...]
    gbp init DIR --orgs orga,orgb [--policy "AND(orga, orgb)"]
    gbp serve --endpoint DIR [--port N]
    gbp run SCRIPT [--golden FILE]
    gbp keygen [--out FILE]

GBP_ORG, GBP_KEY and GBP_ENDPOINT stand in for the matching flags.
"""
from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from dataclasses import dataclass
from pathlib import Path

from . import crypto
from .admin import (EXIT_OK, EXIT_PARSE, EXIT_TRANSPORT, Deployment, Outcome, error_outcome, execute_line,
                    load_key, remote_outcome, write_key)
from .ledger.api import LedgerClient, LedgerServer, RemoteError, TransportFailure
from .ledger.errors import InvalidKey, LedgerError
from .scenario import ScriptError, scenario_runner

GLOBAL_VALUE_FLAGS = ("--org", "--key", "--endpoint")
ADMIN_COMMANDS = ("init", "serve", "run", "keygen")


@dataclass
class CliConfig:
    org: str | None = None
    key_file: str | None = None
    endpoint: str | None = None
    output: str = "human"

    @classmethod
    def from_env(cls, env=None) -> "CliConfig":
        env = os.environ if env is None else env
        return cls(env.get("GBP_ORG"), env.get("GBP_KEY"), env.get("GBP_ENDPOINT"))


def split_globals(argv: list[str], config: CliConfig) -> list[str]:
    """Strip --org/--key/--endpoint/--json from argv into config; return the rest."""
    rest = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        name, eq, value = arg.partition("=")
        if name in GLOBAL_VALUE_FLAGS:
            if not eq:
                if i + 1 >= len(argv):
                    raise ValueError(f"{name} needs a value")
                value = argv[i + 1]
                i += 1
            setattr(config, {"--org": "org", "--key": "key_file", "--endpoint": "endpoint"}[name], value)
        elif arg == "--json":
            config.output = "json"
        else:
            rest.append(arg)
        i += 1
    return rest


def _request_signature(key, org: str, nonce: str, line: str) -> str:
    return crypto.sign(key, f"{org}\n{nonce}\n{line}".encode()).hex()


def _remote_execute(config: CliConfig, key, line: str) -> Outcome:
    nonce = secrets.token_hex(16)
    client = LedgerClient(config.endpoint)
    try:
        result = client.call("execute", org=config.org, line=line, nonce=nonce,
                             signature=_request_signature(key, config.org, nonce, line))
    except (TransportFailure, RemoteError) as e:
        return remote_outcome(e)
    finally:
        client.close()
    return Outcome(result["code"], result["record"])


def _gbp(args: list[str], config: CliConfig) -> Outcome:
    line = " ".join(["gbp", *args])
    if not config.org:
        return Outcome(EXIT_PARSE, {"error": "Usage", "message": "--org (or GBP_ORG) is required"})
    if not config.endpoint:
        return Outcome(EXIT_PARSE, {"error": "Usage", "message": "--endpoint (or GBP_ENDPOINT) is required"})
    key = None
    if config.key_file:
        try:
            key = load_key(config.key_file)
        except (OSError, InvalidKey) as e:
            return error_outcome(EXIT_PARSE, e)
    if config.endpoint.startswith("tcp://"):
        if key is None:
            return Outcome(EXIT_PARSE, {"error": "Usage", "message": "--key is required for a remote ledger"})
        return _remote_execute(config, key, line)
    try:
        deployment = Deployment(config.endpoint)
    except (TransportFailure, OSError, ValueError) as e:
        return error_outcome(EXIT_TRANSPORT, e)
    return deployment.execute(line, config.org, key)


def make_executor(deployment: Deployment):
    """Request handler for the ledger server's "execute" op."""

    def executor(request: dict) -> dict:
        org, line, nonce = request["org"], request["line"], request["nonce"]
        with deployment.lock:
            network = deployment.open()
            if org not in network.msp:
                return {"code": EXIT_PARSE, "record": {"error": "UnknownOrg", "message": org}}
            msg = f"{org}\n{nonce}\n{line}".encode()
            if not crypto.verify(network.msp.get(org).public_key, msg, bytes.fromhex(request["signature"])):
                return {"code": EXIT_PARSE, "record": {"error": "AuthenticationFailed", "message": "bad request signature"}}
            outcome = execute_line(network, line, org)
        return {"code": outcome.code, "record": outcome.record}

    return executor


class _ServedLedger:
    """Re-reads the chain before each query so CLI writes are visible to API readers."""

    def __init__(self, deployment: Deployment):
        self.deployment = deployment

    def __getattr__(self, name):
        with self.deployment.lock:
            ledger = self.deployment.open().ledger
        return getattr(ledger, name)


def _admin(args: list[str], config: CliConfig) -> tuple[int, list[str]]:
    parser = argparse.ArgumentParser(prog="gbp")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("init")
    p.add_argument("dir")
    p.add_argument("--orgs", required=True)
    p.add_argument("--policy", default="")
    p = sub.add_parser("serve")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--host", default="127.0.0.1")
    p = sub.add_parser("run")
    p.add_argument("script")
    p.add_argument("--golden")
    p = sub.add_parser("keygen")
    p.add_argument("--out")
    try:
        ns = parser.parse_args(args)
    except SystemExit:
        return EXIT_PARSE, []

    if ns.cmd == "init":
        orgs = [o.strip().lower() for o in ns.orgs.split(",") if o.strip()]
        try:
            Deployment.init(ns.dir, orgs, ns.policy)
        except (OSError, ValueError, LedgerError) as e:
            return EXIT_PARSE, [f"error {type(e).__name__}: {e}"]
        return EXIT_OK, [f"initialized {ns.dir} with orgs {', '.join(orgs)}"]
    if ns.cmd == "keygen":
        key = crypto.new_signing_key()
        lines = [f"public {crypto.public_bytes(key).hex()}"]
        if ns.out:
            write_key(ns.out, key)
            lines.append(f"private seed written to {ns.out}")
        else:
            lines.append(f"seed {bytes(key).hex()}")
        return EXIT_OK, lines
    if ns.cmd == "run":
        try:
            transcript = scenario_runner(Path(ns.script).read_text())
        except OSError as e:
            return EXIT_TRANSPORT, [f"error {type(e).__name__}: {e}"]
        except ScriptError as e:
            return EXIT_PARSE, [f"error ScriptError: {e}"]
        lines = transcript.lines if config.output == "human" else [json.dumps(r, sort_keys=True) for r in transcript.records]
        if ns.golden:
            expected = Path(ns.golden).read_text().splitlines()
            if expected != transcript.lines:
                return EXIT_PARSE, lines + ["transcript differs from golden file"]
        return transcript.exit_code, lines
    if ns.cmd == "serve":
        if not config.endpoint or config.endpoint.startswith("tcp://"):
            return EXIT_PARSE, ["serve needs --endpoint DIR"]
        try:
            deployment = Deployment(config.endpoint)
        except TransportFailure as e:
            return EXIT_TRANSPORT, [str(e)]
        server = LedgerServer(_ServedLedger(deployment), (ns.host, ns.port), make_executor(deployment))
        print(f"ledger API listening on {server.endpoint}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return EXIT_OK, []
    return EXIT_PARSE, []


def run_command(argv: list[str], config: CliConfig | None = None) -> tuple[int, list[str]]:
    """Run one CLI invocation; returns (exit code, output lines)."""
    config = config or CliConfig.from_env()
    try:
        args = split_globals(list(argv), config)
    except ValueError as e:
        return EXIT_PARSE, [f"error Usage: {e}"]
    if args and args[0] == "gbp":
        args = args[1:]
    if not args:
        return EXIT_PARSE, [__doc__.strip()]
    if args[0] in ADMIN_COMMANDS:
        return _admin(args, config)
    outcome = _gbp(args, config)
    return outcome.code, [outcome.json() if config.output == "json" else outcome.human()]


def main(argv=None) -> None:
    code, lines = run_command(sys.argv[1:] if argv is None else argv)
    stream = sys.stdout if code == EXIT_OK else sys.stderr
    for line in lines:
        print(line, file=stream)
    sys.exit(code)


if __name__ == "__main__":
    main()
