"""GBP command grammar. Proposal rendering lives in `gbpchain.policy.render`, which depends on the ledger."""
from .grammar import (Action, DurationLiteral, IllegalOption, Intent, MalformedDuration, MalformedOption,
                      MissingRequired, OptionSet, ParseError, Target, UnknownVerb, Verb, format_intent,
                      parse_command, parse_duration)

__all__ = [
    "Action", "DurationLiteral", "IllegalOption", "Intent", "MalformedDuration", "MalformedOption",
    "MissingRequired", "OptionSet", "ParseError", "Target", "UnknownVerb", "Verb", "format_intent",
    "parse_command", "parse_duration",
]
