"""Endorsement policy expressions and their evaluation.

Expressions are trees of And / Or over Member leaves, k-of-n thresholds and
the 2f+1-of-n Byzantine quorum. Text form (used in genesis config and on the
command line)::

    AND(org1, org2, OR(org3, org4))
    OUTOF(3, org1, org2, org3, org4)
    BFT(1, org1, org2, org3, org4)
    MAJORITY(org1, org2, org3)        # sugar for OUTOF(n//2 + 1, ...)
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Union


@dataclass(frozen=True)
class Member:
    org: str

    def __post_init__(self):
        if not self.org:
            raise ValueError("empty org id")


@dataclass(frozen=True)
class And:
    children: tuple["Expr", ...]

    def __post_init__(self):
        if not self.children:
            raise ValueError("AND needs at least one operand")


@dataclass(frozen=True)
class Or:
    children: tuple["Expr", ...]

    def __post_init__(self):
        if not self.children:
            raise ValueError("OR needs at least one operand")


def _check_orgs(orgs: tuple[str, ...]) -> None:
    if len(set(orgs)) != len(orgs):
        raise ValueError(f"duplicate org in {orgs}")


@dataclass(frozen=True)
class KOfN:
    k: int
    orgs: tuple[str, ...]

    def __post_init__(self):
        _check_orgs(self.orgs)
        if not 1 <= self.k <= len(self.orgs):
            raise ValueError(f"k={self.k} outside 1..{len(self.orgs)}")


@dataclass(frozen=True)
class TwoFPlusOne:
    f: int
    orgs: tuple[str, ...]

    def __post_init__(self):
        _check_orgs(self.orgs)
        if self.f < 0 or len(self.orgs) <= 3 * self.f:
            raise ValueError(f"need n > 3f, got n={len(self.orgs)} f={self.f}")

    @property
    def threshold(self) -> int:
        return 2 * self.f + 1


Expr = Union[Member, And, Or, KOfN, TwoFPlusOne]


def all_of(orgs: Iterable[str]) -> And:
    return And(tuple(Member(o) for o in orgs))


def majority(orgs: Iterable[str]) -> KOfN:
    orgs = tuple(orgs)
    return KOfN(len(orgs) // 2 + 1, orgs)


def evaluate(expr: Expr, endorsers: Iterable[str]) -> bool:
    """True when the set of (already verified) endorsing orgs satisfies expr.

    Repeated endorsements from one org count once.
    """
    return _eval(expr, frozenset(endorsers))


def _eval(expr: Expr, s: frozenset) -> bool:
    if isinstance(expr, Member):
        return expr.org in s
    if isinstance(expr, And):
        return all(_eval(c, s) for c in expr.children)
    if isinstance(expr, Or):
        return any(_eval(c, s) for c in expr.children)
    if isinstance(expr, KOfN):
        return len(s.intersection(expr.orgs)) >= expr.k
    if isinstance(expr, TwoFPlusOne):
        return len(s.intersection(expr.orgs)) >= expr.threshold
    raise TypeError(f"not a policy expression: {expr!r}")


def orgs_in(expr: Expr) -> set[str]:
    if isinstance(expr, Member):
        return {expr.org}
    if isinstance(expr, (And, Or)):
        return set().union(*(orgs_in(c) for c in expr.children))
    return set(expr.orgs)


def to_text(expr: Expr) -> str:
    if isinstance(expr, Member):
        return expr.org
    if isinstance(expr, And):
        return "AND(" + ", ".join(to_text(c) for c in expr.children) + ")"
    if isinstance(expr, Or):
        return "OR(" + ", ".join(to_text(c) for c in expr.children) + ")"
    if isinstance(expr, KOfN):
        return f"OUTOF({expr.k}, " + ", ".join(expr.orgs) + ")"
    if isinstance(expr, TwoFPlusOne):
        return f"BFT({expr.f}, " + ", ".join(expr.orgs) + ")"
    raise TypeError(expr)


_TOKEN = re.compile(r"\s*(?:([A-Za-z0-9_.-]+)|([(),]))")


def parse_policy(text: str) -> Expr:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"bad endorsement policy near {text[pos:]!r}")
        tokens.append(m.group(1) or m.group(2))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    expr, i = _parse(tokens, 0)
    if i != len(tokens):
        raise ValueError(f"trailing input in endorsement policy: {tokens[i:]}")
    return expr


def _parse(tokens: list[str], i: int) -> tuple[Expr, int]:
    if i >= len(tokens):
        raise ValueError("unexpected end of endorsement policy")
    word = tokens[i]
    if word in "(),":
        raise ValueError(f"unexpected {word!r}")
    if i + 1 < len(tokens) and tokens[i + 1] == "(":
        args, i = _parse_args(tokens, i + 2)
        op = word.upper()
        if op in ("AND", "OR"):
            return (And if op == "AND" else Or)(tuple(args)), i
        names = []
        for a in args:
            if not isinstance(a, Member):
                raise ValueError(f"{op} takes a count and org names")
            names.append(a.org)
        if op == "MAJORITY":
            return majority(names), i
        if op in ("OUTOF", "BFT") and names and names[0].isdigit():
            n = int(names[0])
            return (KOfN if op == "OUTOF" else TwoFPlusOne)(n, tuple(names[1:])), i
        raise ValueError(f"unknown policy operator {word!r}")
    return Member(word), i + 1


def _parse_args(tokens: list[str], i: int) -> tuple[list[Expr], int]:
    args = []
    while True:
        expr, i = _parse(tokens, i)
        args.append(expr)
        if i >= len(tokens):
            raise ValueError("unclosed '('")
        if tokens[i] == ")":
            return args, i + 1
        if tokens[i] != ",":
            raise ValueError(f"expected ',' or ')', got {tokens[i]!r}")
        i += 1
