"""Batch replay of multi-organization GBP scripts.

Script format, one command per line:

    # comment
    @orga gbp member-create alice --ip 10.0.0.5
    @orgb gbp member-create orga.alice --dept x
    !advance 8d

Every `@org` named in the script becomes an organization of a fresh simulated
network (in order of first appearance, keys derived from the org name, clock
starting at 0), so the same script always produces the same transcript.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import crypto
from .admin import EXIT_OK, EXIT_TRANSPORT, Outcome, error_outcome, execute_line
from .clock import ManualClock
from .ledger.api import TransportFailure
from .ledger.network import Network
from .policy.grammar import ParseError, parse_duration

_LINE = re.compile(r"@(\S+)\s+(.*)")


class ScriptError(ValueError):
    pass


@dataclass
class Transcript:
    lines: list[str] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)
    exit_code: int = EXIT_OK
    network: Network | None = None

    def add(self, n: int, org: str, command: str, outcome: Outcome) -> None:
        self.lines.append(f"[{n}] @{org} {command} -> exit={outcome.code} {outcome.human()}")
        self.records.append({"line": n, "org": org, "command": command, "exit": outcome.code, **outcome.record})


def _parse_script(text: str) -> list[tuple]:
    steps = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("!"):
            verb, _, arg = line[1:].strip().partition(" ")
            if verb != "advance":
                raise ScriptError(f"line {n}: unknown directive !{verb}")
            try:
                seconds = parse_duration(arg.strip()).seconds
            except ParseError as e:
                raise ScriptError(f"line {n}: {e}") from None
            steps.append((n, "!", (arg.strip(), seconds)))
            continue
        m = _LINE.fullmatch(line)
        if m is None:
            raise ScriptError(f"line {n}: expected '@org command', got {raw!r}")
        steps.append((n, m.group(1).lower(), m.group(2)))
    return steps


def org_key(org: str):
    return crypto.new_signing_key(crypto.seed_for(f"org:{org}"))


def scenario_runner(script: str, *, clock: ManualClock | None = None) -> Transcript:
    """Run a script against a fresh network and return its transcript.

    Per-command failures (parse errors, rejections) are recorded and the run
    continues; a transport failure ends the run with exit code 4.
    """
    steps = _parse_script(script)
    transcript = Transcript()
    orgs = list(dict.fromkeys(org for _, org, _ in steps if org != "!"))
    if not orgs:
        return transcript
    clock = clock or ManualClock(0.0)
    network = Network({o: org_key(o) for o in orgs}, clock=clock)
    for n, org, command in steps:
        if org == "!":
            text, seconds = command
            clock.advance(seconds)
            transcript.lines.append(f"[{n}] !advance {text} -> t={clock.now():g}")
            continue
        try:
            outcome = execute_line(network, command, org)
        except TransportFailure as e:
            transcript.add(n, org, command, error_outcome(EXIT_TRANSPORT, e))
            transcript.exit_code = EXIT_TRANSPORT
            break
        transcript.add(n, org, command, outcome)
    transcript.network = network
    return transcript
