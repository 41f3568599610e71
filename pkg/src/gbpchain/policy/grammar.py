"""Parser and canonical printer for the GBP-style administrative command language.

    command := "gbp" verb name option*
    option  := "--" key (":" value | " " value)

Names are case-insensitive and normalized to lowercase. See docs/grammar.md.
"""
from __future__ import annotations

import enum
import ipaddress
import re
from dataclasses import dataclass, field, fields


class ParseError(Exception):
    """Base class for every rejection raised by the parser."""


class UnknownVerb(ParseError):
    pass


class MalformedOption(ParseError):
    """Option name recognized, value invalid (or option repeated)."""


class IllegalOption(ParseError):
    """Option unknown, or not allowed for this verb."""


class MissingRequired(ParseError):
    pass


class MalformedDuration(ParseError):
    pass


class InvalidName(ParseError):
    pass


class UnexpectedToken(ParseError):
    pass


class InvalidEncoding(ParseError):
    pass


class Verb(enum.Enum):
    CREATE_MEMBER = "CreateMember"
    CREATE_GROUP = "CreateGroup"
    CREATE_RESOURCE = "CreateResource"
    CREATE_POLICY_RULE = "CreatePolicyRule"
    DELETE = "Delete"
    QUERY = "Query"


class Target(enum.Enum):
    """What a Delete or Query verb operates on; also the second half of the surface verb."""

    MEMBER = "member"
    GROUP = "group"
    RESOURCE = "resource"
    POLICY_RULE = "policy-rule"


class Action(enum.Enum):
    ALLOW = "allow"
    DENY = "deny"


SHOW_KINDS = ("member", "group", "resource", "policy", "access")

_CREATE_VERBS = {
    "member-create": (Verb.CREATE_MEMBER, Target.MEMBER),
    "group-create": (Verb.CREATE_GROUP, Target.GROUP),
    "resource-create": (Verb.CREATE_RESOURCE, Target.RESOURCE),
    "policy-rule-create": (Verb.CREATE_POLICY_RULE, Target.POLICY_RULE),
}
_DELETE_VERBS = {f"{t.value}-delete": t for t in Target}

_UNIT_SECONDS = {"s": 1, "m": 60, "h": 3600, "d": 86400, "w": 604800}
_DURATION_RE = re.compile(r"([0-9]+)([smhdw])")
_SIMPLE_RE = re.compile(r"[a-z0-9][a-z0-9_-]{0,63}")
_HEX_KEY_RE = re.compile(r"[0-9a-f]{64}")


@dataclass(frozen=True)
class DurationLiteral:
    magnitude: int
    unit: str

    @property
    def seconds(self) -> int:
        return self.magnitude * _UNIT_SECONDS[self.unit]

    def __str__(self) -> str:
        return f"{self.magnitude}{self.unit}"


def parse_duration(text: str) -> DurationLiteral:
    m = _DURATION_RE.fullmatch(text.strip().lower()) if isinstance(text, str) else None
    if m is None:
        raise MalformedDuration(f"bad duration {text!r}; expected e.g. 30s, 90m, 1w")
    magnitude = int(m.group(1))
    if magnitude <= 0:
        raise MalformedDuration(f"duration must be positive: {text!r}")
    return DurationLiteral(magnitude, m.group(2))


def canonical_duration(seconds: int) -> str:
    """Largest unit that divides the value exactly; inverse of parse_duration(...).seconds."""
    for unit in ("w", "d", "h", "m"):
        factor = _UNIT_SECONDS[unit]
        if seconds % factor == 0:
            return f"{seconds // factor}{unit}"
    return f"{seconds}s"


def is_simple_name(s: str) -> bool:
    return bool(_SIMPLE_RE.fullmatch(s))


def is_qualified_name(s: str) -> bool:
    org, sep, name = s.partition(".")
    return bool(sep) and is_simple_name(org) and is_simple_name(name)


def qualify(name: str, org: str) -> str:
    return name if "." in name else f"{org}.{name}"


@dataclass(frozen=True)
class OptionSet:
    add: tuple[str, ...] = ()
    src: str | None = None
    dst: str | None = None
    actions: Action | None = None
    timeout: int | None = None
    ip: str | None = None
    pubkey: str | None = None
    dept: str | None = None
    name: str | None = None


@dataclass(frozen=True)
class Intent:
    verb: Verb
    subject: str
    options: OptionSet = field(default_factory=OptionSet)
    target: Target | None = None


def _ref(value: str) -> str:
    if not (is_simple_name(value) or is_qualified_name(value)):
        raise MalformedOption(f"not a name or org.name reference: {value!r}")
    return value


def _qualified(value: str) -> str:
    if not is_qualified_name(value):
        raise MalformedOption(f"expected <org>.<name>, got {value!r}")
    return value


def _members(value: str) -> tuple[str, ...]:
    refs = tuple(value.split(","))
    for r in refs:
        _ref(r)
    if len(set(refs)) != len(refs):
        raise MalformedOption(f"duplicate member in {value!r}")
    return refs


def _action(value: str) -> Action:
    try:
        return Action(value)
    except ValueError:
        raise MalformedOption(f"--actions must be allow or deny, got {value!r}") from None


def _timeout(value: str) -> int:
    try:
        return parse_duration(value).seconds
    except MalformedDuration as e:
        raise MalformedOption(str(e)) from None


def _ip(value: str) -> str:
    try:
        addr = ipaddress.IPv4Address(value)
    except ValueError:
        raise MalformedOption(f"not a dotted-quad IPv4 address: {value!r}") from None
    if int(addr) == 0 or str(addr) != value:
        raise MalformedOption(f"unusable endpoint address: {value!r}")
    return value


def _pubkey(value: str) -> str:
    if not _HEX_KEY_RE.fullmatch(value):
        raise MalformedOption("--pubkey must be 64 hex characters (32-byte Ed25519 key)")
    return value


def _simple(value: str) -> str:
    if not is_simple_name(value):
        raise MalformedOption(f"invalid name {value!r}")
    return value


_OPTION_PARSERS = {
    "add": _members,
    "src": _ref,
    "dst": _ref,
    "actions": _action,
    "timeout": _timeout,
    "ip": _ip,
    "pubkey": _pubkey,
    "dept": _simple,
    "name": _ref,
}

_LEGAL = {
    Verb.CREATE_MEMBER: {"ip", "pubkey", "dept"},
    Verb.CREATE_GROUP: {"add", "timeout"},
    Verb.CREATE_RESOURCE: {"ip"},
    Verb.CREATE_POLICY_RULE: {"src", "dst", "actions", "timeout"},
}


def _legal_options(verb: Verb, target: Target | None, subject: str) -> set[str]:
    if verb in _LEGAL:
        return _LEGAL[verb]
    if verb is Verb.DELETE:
        return {"src", "dst"} if target is Target.POLICY_RULE else set()
    if subject in ("policy", "access"):
        return {"src", "dst"}
    return {"name"}


def _tokenize_options(tokens: list[str]) -> list[tuple[str, str]]:
    pairs = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise UnexpectedToken(f"unexpected token {tok!r}")
        key, sep, value = tok[2:].partition(":")
        if not sep:
            if i + 1 >= len(tokens) or tokens[i + 1].startswith("--"):
                if key in _OPTION_PARSERS:
                    raise MalformedOption(f"--{key} needs a value")
                raise IllegalOption(f"unknown option --{key}")
            value = tokens[i + 1]
            i += 1
        pairs.append((key, value))
        i += 1
    return pairs


def parse_command(line: str | bytes) -> Intent:
    """Parse one command line into a validated Intent, or raise a ParseError subclass."""
    if isinstance(line, (bytes, bytearray)):
        try:
            line = bytes(line).decode("utf-8")
        except UnicodeDecodeError:
            raise InvalidEncoding("command is not valid UTF-8") from None
    tokens = line.lower().split()
    if not tokens:
        raise MissingRequired("empty command")
    if tokens[0] != "gbp":
        raise UnknownVerb(f"commands start with 'gbp', got {tokens[0]!r}")
    if len(tokens) < 2:
        raise UnknownVerb("missing verb")
    word = tokens[1]
    if word in _CREATE_VERBS:
        verb, target = _CREATE_VERBS[word]
    elif word in _DELETE_VERBS:
        verb, target = Verb.DELETE, _DELETE_VERBS[word]
    elif word == "show":
        verb, target = Verb.QUERY, None
    else:
        raise UnknownVerb(f"unknown verb {word!r}")

    if len(tokens) < 3 or tokens[2].startswith("--"):
        raise MissingRequired(f"{word} needs a name")
    subject = tokens[2]
    if verb is Verb.QUERY:
        if subject not in SHOW_KINDS:
            raise InvalidName(f"show expects one of {', '.join(SHOW_KINDS)}; got {subject!r}")
    elif verb is Verb.DELETE:
        if not (is_simple_name(subject) or is_qualified_name(subject)):
            raise InvalidName(f"invalid name {subject!r}")
    elif not is_simple_name(subject):
        raise InvalidName(f"invalid name {subject!r} (letters, digits, '_' and '-' only)")

    legal = _legal_options(verb, target, subject)
    values: dict[str, object] = {}
    for key, raw in _tokenize_options(tokens[3:]):
        if key not in _OPTION_PARSERS:
            raise IllegalOption(f"unknown option --{key}")
        if key not in legal:
            raise IllegalOption(f"--{key} is not allowed for {word}")
        if key in values:
            raise MalformedOption(f"--{key} given twice")
        values[key] = _OPTION_PARSERS[key](raw)
    opts = OptionSet(**values)

    if verb is Verb.CREATE_POLICY_RULE and (opts.src is None or opts.dst is None):
        raise MissingRequired("policy-rule-create needs both --src and --dst")
    if verb is Verb.CREATE_RESOURCE and opts.ip is None:
        raise MissingRequired("resource-create needs --ip")
    if verb is Verb.DELETE and target is Target.POLICY_RULE and (opts.src is None) != (opts.dst is None):
        raise MissingRequired("policy-rule-delete takes --src and --dst together")
    if verb is Verb.QUERY:
        if subject in ("policy", "access") and (opts.src is None or opts.dst is None):
            raise MissingRequired(f"show {subject} needs --src and --dst")
        if subject not in ("policy", "access") and opts.name is None:
            raise MissingRequired(f"show {subject} needs --name")
    return Intent(verb, subject, opts, target)


def _surface_verb(intent: Intent) -> str:
    if intent.verb is Verb.QUERY:
        return "show"
    if intent.verb is Verb.DELETE:
        return f"{intent.target.value}-delete"
    for word, (verb, _) in _CREATE_VERBS.items():
        if verb is intent.verb:
            return word
    raise ValueError(intent.verb)


def format_intent(intent: Intent) -> str:
    """Canonical one-line form; parse_command(format_intent(i)) == i."""
    parts = ["gbp", _surface_verb(intent), intent.subject]
    for f in fields(OptionSet):
        value = getattr(intent.options, f.name)
        if value is None or value == ():
            continue
        if f.name == "add":
            value = ",".join(value)
        elif f.name == "actions":
            value = value.value
        elif f.name == "timeout":
            value = canonical_duration(value)
        parts.append(f"--{f.name}:{value}")
    return " ".join(parts)
