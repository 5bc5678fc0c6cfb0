"""Nested schemes, dictionary schemes, and their shredded flat counterparts.

A scheme is a finite set whose members are flat attribute names or schemes,
recursively.  Hard invariants: no flat attribute occurs twice anywhere, and
the empty scheme occurs at most once in the whole structure.  Members are
kept canonically ordered (flat attributes sorted, then nested schemes sorted
by their encoding) so derived column names and debug dumps are stable.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union

from .errors import ParseError, SchemeError

_ATTR_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_']*\Z")

#: The linked-list successor column present in every inner (store) relation.
NXT = "nxt"

SchemeMember = Union[str, "Scheme"]


def _check_attr(name: str) -> str:
    if not isinstance(name, str) or not _ATTR_RE.match(name):
        raise SchemeError(f"invalid flat attribute name {name!r}")
    return name


@dataclass(frozen=True)
class Scheme:
    """A nested relational scheme: a set of flat attributes and sub-schemes."""

    members: tuple[SchemeMember, ...]

    def __post_init__(self):
        flats = [m for m in self.members if isinstance(m, str)]
        nested = [m for m in self.members if isinstance(m, Scheme)]
        if len(flats) + len(nested) != len(self.members):
            raise SchemeError("scheme members must be attribute names or schemes")
        for a in flats:
            _check_attr(a)
        ordered = tuple(sorted(flats)) + tuple(
            sorted(nested, key=lambda s: s.encode())
        )
        object.__setattr__(self, "members", ordered)
        # Global invariants over the full structure.
        seen: set[str] = set()
        empties = 0
        for member in _walk(self):
            if isinstance(member, str):
                if member in seen:
                    raise SchemeError(f"flat attribute {member!r} occurs twice")
                seen.add(member)
            elif not member.members:
                empties += 1
                if empties > 1:
                    raise SchemeError("the empty scheme may occur at most once")
        if len(set(self.members)) != len(self.members):
            raise SchemeError("duplicate scheme member")

    @staticmethod
    def of(*members: SchemeMember | Iterable[SchemeMember]) -> "Scheme":
        flat: list[SchemeMember] = []
        for m in members:
            if isinstance(m, (str, Scheme)):
                flat.append(m)
            else:
                flat.extend(m)
        return Scheme(tuple(flat))

    # -- structure ---------------------------------------------------------
    @property
    def flats(self) -> tuple[str, ...]:
        """Direct flat members, sorted."""
        return tuple(m for m in self.members if isinstance(m, str))

    @property
    def nested(self) -> tuple["Scheme", ...]:
        """Direct nested members, canonically ordered."""
        return tuple(m for m in self.members if isinstance(m, Scheme))

    @property
    def is_flat(self) -> bool:
        return not self.nested

    def __contains__(self, member: SchemeMember) -> bool:
        return member in self.members

    def __iter__(self) -> Iterator[SchemeMember]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def minus(self, members: Iterable[SchemeMember]) -> "Scheme":
        drop = set(members)
        return Scheme(tuple(m for m in self.members if m not in drop))

    def union(self, *members: SchemeMember) -> "Scheme":
        extra = [m for m in members if m not in self.members]
        return Scheme(self.members + tuple(extra))

    # -- encoding ----------------------------------------------------------
    def encode(self) -> str:
        """Canonical text form, e.g. ``{x,{y},{u,{v}}}`` (members ordered)."""
        return "{" + ",".join(
            m if isinstance(m, str) else m.encode() for m in self.members
        ) + "}"

    def __str__(self) -> str:
        return self.encode()


def _walk(scheme: Scheme) -> Iterator[SchemeMember]:
    for m in scheme.members:
        yield m
        if isinstance(m, Scheme):
            yield from _walk(m)


EMPTY_SCHEME = Scheme(())


def flat_attrs(scheme: Scheme) -> frozenset[str]:
    """All flat attributes occurring anywhere in the scheme."""
    return frozenset(m for m in _walk(scheme) if isinstance(m, str))


def sub_schemes(scheme: Scheme) -> frozenset[Scheme]:
    """All schemes occurring anywhere inside (the scheme itself excluded)."""
    return frozenset(m for m in _walk(scheme) if isinstance(m, Scheme))


@dataclass(frozen=True)
class DictScheme:
    """Scheme of a dictionary mapping flat key tuples to non-empty relations."""

    keys: tuple[str, ...]
    value_scheme: Scheme

    def __post_init__(self):
        ordered = tuple(sorted(self.keys))
        object.__setattr__(self, "keys", ordered)
        if len(set(ordered)) != len(ordered):
            raise SchemeError("duplicate dictionary key attribute")
        for k in ordered:
            _check_attr(k)
        overlap = set(ordered) & flat_attrs(self.value_scheme)
        if overlap:
            raise SchemeError(
                f"key attributes {sorted(overlap)} reappear in the value scheme"
            )

    def encode(self) -> str:
        return "{" + ",".join(self.keys) + "} -> " + self.value_scheme.encode()

    def __str__(self) -> str:
        return self.encode()


def compatible(scheme: Scheme, dscheme: DictScheme) -> bool:
    """May a relation over ``scheme`` probe a dictionary over ``dscheme``?

    Requires every key to be a flat member of the scheme and the value scheme
    to introduce only fresh flat attributes.
    """
    if not set(dscheme.keys) <= set(scheme.flats):
        return False
    if flat_attrs(dscheme.value_scheme) & flat_attrs(scheme):
        return False
    # The extended scheme must itself be well-formed; the only collision the
    # attribute checks above miss is the (at most one) empty nested member.
    value = dscheme.value_scheme
    if value in scheme or value in sub_schemes(scheme):
        return False
    empties = sum(1 for s in (value, *sub_schemes(value)) if len(s) == 0)
    empties += sum(1 for s in sub_schemes(scheme) if len(s) == 0)
    return empties <= 1


# -- shredded (flat) counterparts ------------------------------------------

def hol_name(scheme: Scheme) -> str:
    """Head-of-list column name for a nested member."""
    return "hol" + scheme.encode()


def w_name(scheme: Scheme) -> str:
    """Weight column name for a nested member."""
    return "w" + scheme.encode()


@dataclass(frozen=True)
class ShreddedScheme:
    """Flat column layout of a nested scheme.

    Flat attributes stay; every nested member Z contributes a head column
    hol(Z) and a weight column w(Z); inner (store) relations carry nxt too.
    The generated names contain braces, which attribute names cannot, so they
    are always fresh.
    """

    source: Scheme
    inner: bool
    columns: tuple[str, ...]

    @property
    def data_columns(self) -> tuple[str, ...]:
        """Columns without nxt (i.e. the outer shredding of ``source``)."""
        return tuple(c for c in self.columns if c != NXT)


def shred_scheme(scheme: Scheme, inner: bool = False) -> ShreddedScheme:
    cols: list[str] = list(scheme.flats)
    for z in scheme.nested:
        cols.append(hol_name(z))
        cols.append(w_name(z))
    if inner:
        cols.append(NXT)
    return ShreddedScheme(scheme, inner, tuple(cols))


# -- textual scheme syntax ---------------------------------------------------

def parse_scheme(text: str) -> Scheme:
    """Parse ``{x,{y},{u,{v}}}``-style scheme text."""
    scheme, rest = _parse_scheme(text.strip())
    if rest.strip():
        raise ParseError(f"trailing input after scheme: {rest!r}")
    return scheme


def parse_dict_scheme(text: str) -> DictScheme:
    """Parse ``{y} -> {z,{u}}``-style dictionary scheme text."""
    if "->" not in text:
        raise ParseError(f"dictionary scheme needs '->': {text!r}")
    key_part, value_part = text.split("->", 1)
    keys = parse_scheme(key_part.strip())
    if not keys.is_flat:
        raise ParseError("dictionary keys must be flat attributes")
    return DictScheme(keys.flats, parse_scheme(value_part.strip()))


def _parse_scheme(text: str) -> tuple[Scheme, str]:
    if not text.startswith("{"):
        raise ParseError(f"expected '{{' at {text[:20]!r}")
    rest = text[1:].lstrip()
    members: list[SchemeMember] = []
    if rest.startswith("}"):
        return Scheme(()), rest[1:]
    while True:
        if rest.startswith("{"):
            sub, rest = _parse_scheme(rest)
            members.append(sub)
        else:
            m = re.match(r"[A-Za-z_][A-Za-z0-9_']*", rest)
            if not m:
                raise ParseError(f"expected attribute or '{{' at {rest[:20]!r}")
            members.append(m.group(0))
            rest = rest[m.end():]
        rest = rest.lstrip()
        if rest.startswith(","):
            rest = rest[1:].lstrip()
            continue
        if rest.startswith("}"):
            return Scheme(tuple(members)), rest[1:]
        raise ParseError(f"expected ',' or '}}' at {rest[:20]!r}")


# -- selection predicates -----------------------------------------------------

_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
_OP_ALIASES = {"==": "=", "≠": "!=", "≤": "<=", "≥": ">="}


@dataclass(frozen=True)
class Attr:
    name: str


@dataclass(frozen=True)
class Const:
    value: int | str


@dataclass(frozen=True)
class Comparison:
    lhs: Attr
    op: str
    rhs: Attr | Const

    def __post_init__(self):
        op = _OP_ALIASES.get(self.op, self.op)
        if op not in _OPS:
            raise SchemeError(f"unknown comparison operator {self.op!r}")
        object.__setattr__(self, "op", op)


@dataclass(frozen=True)
class Predicate:
    """A conjunction of attr-op-constant / attr-op-attr comparisons."""

    comparisons: tuple[Comparison, ...] = ()

    @staticmethod
    def of(*comparisons: Comparison) -> "Predicate":
        return Predicate(tuple(comparisons))

    @property
    def attrs(self) -> frozenset[str]:
        out = set()
        for c in self.comparisons:
            out.add(c.lhs.name)
            if isinstance(c.rhs, Attr):
                out.add(c.rhs.name)
        return frozenset(out)

    def holds(self, row: Mapping[str, int | str]) -> bool:
        for c in self.comparisons:
            lhs = row[c.lhs.name]
            rhs = row[c.rhs.name] if isinstance(c.rhs, Attr) else c.rhs.value
            if type(lhs) is not type(rhs):
                # Values of different kinds only support (in)equality.
                if c.op == "=":
                    return False
                if c.op != "!=":
                    raise SchemeError(
                        f"ordered comparison between {lhs!r} and {rhs!r}"
                    )
                continue
            if not _OPS[c.op](lhs, rhs):
                return False
        return True


TRUE = Predicate(())


def comparison(lhs: str, op: str, rhs: "int | str | Attr | Const") -> Comparison:
    if not isinstance(rhs, (Attr, Const)):
        rhs = Const(rhs)
    return Comparison(Attr(lhs), op, rhs)
