"""NSA expression trees and their scheme inference.

Expressions are built from input atoms and the operators select, project,
rename, union, difference, groupby, nested semijoin, unnest, and flatten.
``infer_scheme`` assigns every well-typed expression a unique Scheme (or
DictScheme for groupby) and raises ExprTypeError naming the violated rule
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union as TUnion

from .errors import ExprTypeError, SchemeError
from .schema import (
    DictScheme,
    Predicate,
    Scheme,
    compatible,
    flat_attrs,
)


@dataclass(frozen=True)
class Rel:
    """An input atom: a named flat base relation, optionally rebinding its
    columns positionally (``Rel("R", ("a", "b"))`` reads R's columns as a, b).
    """

    name: str
    attrs: tuple[str, ...] | None = None

    def __str__(self) -> str:
        if self.attrs is None:
            return self.name
        return f"{self.name}({','.join(self.attrs)})"


@dataclass(frozen=True)
class Select:
    child: "NsaExpr"
    pred: Predicate

    def __str__(self) -> str:
        conj = " and ".join(
            f"{c.lhs.name}{c.op}{getattr(c.rhs, 'name', None) or getattr(c.rhs, 'value', '')}"
            for c in self.pred.comparisons
        ) or "true"
        return f"select[{conj}]({self.child})"


@dataclass(frozen=True)
class Project:
    child: "NsaExpr"
    target: Scheme

    def __str__(self) -> str:
        return f"project[{self.target}]({self.child})"


@dataclass(frozen=True)
class Rename:
    child: "NsaExpr"
    mapping: tuple[tuple[str, str], ...]

    def __str__(self) -> str:
        ren = ",".join(f"{a}->{b}" for a, b in self.mapping)
        return f"rename[{ren}]({self.child})"


@dataclass(frozen=True)
class Union:
    left: "NsaExpr"
    right: "NsaExpr"

    def __str__(self) -> str:
        return f"({self.left} union {self.right})"


@dataclass(frozen=True)
class Difference:
    left: "NsaExpr"
    right: "NsaExpr"

    def __str__(self) -> str:
        return f"({self.left} minus {self.right})"


@dataclass(frozen=True)
class GroupBy:
    child: "NsaExpr"
    keys: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(sorted(self.keys)))

    def __str__(self) -> str:
        return f"groupby[{{{','.join(self.keys)}}}]({self.child})"


@dataclass(frozen=True)
class NSemijoin:
    left: "NsaExpr"
    right: "NsaExpr"

    def __str__(self) -> str:
        return f"({self.left} nsjoin {self.right})"


@dataclass(frozen=True)
class Unnest:
    child: "NsaExpr"
    target: Scheme

    def __str__(self) -> str:
        return f"unnest[{self.target}]({self.child})"


@dataclass(frozen=True)
class Flatten:
    child: "NsaExpr"

    def __str__(self) -> str:
        return f"flatten({self.child})"


NsaExpr = TUnion[
    Rel, Select, Project, Rename, Union, Difference,
    GroupBy, NSemijoin, Unnest, Flatten,
]

#: Operators whose output cardinality never drops below the input's.
NON_SHRINKING = (Project, Rename, Union, Unnest, Flatten)
#: Operators that may lose tuples (or, for groupby, collapse keys).
SHRINKING = (Select, Difference, NSemijoin, GroupBy)

Env = Mapping[str, "Scheme | Sequence[str]"]


def _declared(env: Env, name: str) -> Scheme:
    try:
        decl = env[name]
    except KeyError:
        raise ExprTypeError("input", Rel(name), "undeclared relation") from None
    if isinstance(decl, Scheme):
        return decl
    return Scheme.of(tuple(decl))


def _relation_scheme(e: NsaExpr, env: Env, rule: str) -> Scheme:
    s = infer_scheme(e, env)
    if isinstance(s, DictScheme):
        raise ExprTypeError(rule, e, "operand is a dictionary, not a relation")
    return s


def infer_scheme(e: NsaExpr, env: Env) -> Scheme | DictScheme:
    """The unique scheme of ``e``, or ExprTypeError naming the broken rule."""
    if isinstance(e, Rel):
        declared = _declared(env, e.name)
        if not declared.is_flat:
            raise ExprTypeError("input", e, "base relations must be flat")
        if e.attrs is None:
            return declared
        if len(e.attrs) != len(declared.flats):
            raise ExprTypeError(
                "input", e,
                f"{e.name} has arity {len(declared.flats)}, atom binds {len(e.attrs)}",
            )
        try:
            return Scheme.of(e.attrs)
        except SchemeError as exc:
            raise ExprTypeError("input", e, str(exc)) from exc

    if isinstance(e, Select):
        scheme = _relation_scheme(e.child, env, "select")
        loose = e.pred.attrs - set(scheme.flats)
        if loose:
            raise ExprTypeError(
                "select", e, f"predicate attributes {sorted(loose)} are not flat members"
            )
        return scheme

    if isinstance(e, Project):
        scheme = _relation_scheme(e.child, env, "project")
        extra = set(e.target.members) - set(scheme.members)
        if extra:
            raise ExprTypeError(
                "project", e, f"target members {[str(m) for m in extra]} not in input"
            )
        return e.target

    if isinstance(e, Rename):
        scheme = _relation_scheme(e.child, env, "rename")
        mapping = dict(e.mapping)
        missing = set(mapping) - flat_attrs(scheme)
        if missing:
            raise ExprTypeError("rename", e, f"unknown attributes {sorted(missing)}")
        if len(set(mapping.values())) != len(mapping):
            raise ExprTypeError("rename", e, "renaming is not injective")
        try:
            return rename_scheme(scheme, mapping)
        except SchemeError as exc:
            raise ExprTypeError("rename", e, str(exc)) from exc

    if isinstance(e, Union):
        ls = _relation_scheme(e.left, env, "union")
        rs = _relation_scheme(e.right, env, "union")
        if ls != rs:
            raise ExprTypeError("union", e, f"schemes differ: {ls} vs {rs}")
        return ls

    if isinstance(e, Difference):
        ls = _relation_scheme(e.left, env, "difference")
        rs = _relation_scheme(e.right, env, "difference")
        if ls != rs:
            raise ExprTypeError("difference", e, f"schemes differ: {ls} vs {rs}")
        if not ls.is_flat:
            raise ExprTypeError("difference", e, "difference requires flat schemes")
        return ls

    if isinstance(e, GroupBy):
        scheme = _relation_scheme(e.child, env, "groupby")
        loose = set(e.keys) - set(scheme.flats)
        if loose:
            raise ExprTypeError(
                "groupby", e, f"keys {sorted(loose)} are not flat members"
            )
        value_scheme = scheme.minus(e.keys)
        return DictScheme(e.keys, value_scheme)

    if isinstance(e, NSemijoin):
        ls = _relation_scheme(e.left, env, "nsemijoin")
        rs = infer_scheme(e.right, env)
        if not isinstance(rs, DictScheme):
            raise ExprTypeError("nsemijoin", e, "right operand must be a dictionary")
        if not compatible(ls, rs):
            raise ExprTypeError(
                "nsemijoin", e, f"{ls} is not compatible with {rs}"
            )
        try:
            return ls.union(rs.value_scheme)
        except SchemeError as exc:
            raise ExprTypeError("nsemijoin", e, str(exc)) from exc

    if isinstance(e, Unnest):
        scheme = _relation_scheme(e.child, env, "unnest")
        if e.target not in scheme.nested:
            raise ExprTypeError(
                "unnest", e, f"{e.target} is not a nested member of {scheme}"
            )
        return scheme.minus([e.target]).union(*e.target.members)

    if isinstance(e, Flatten):
        scheme = _relation_scheme(e.child, env, "flatten")
        return Scheme.of(sorted(flat_attrs(scheme)))

    raise ExprTypeError("input", e, f"unknown expression node {type(e).__name__}")


def rename_scheme(scheme: Scheme, mapping: Mapping[str, str]) -> Scheme:
    return Scheme.of(
        mapping.get(m, m) if isinstance(m, str) else rename_scheme(m, mapping)
        for m in scheme.members
    )


def children(e: NsaExpr) -> tuple[NsaExpr, ...]:
    if isinstance(e, (Select, Project, Rename, GroupBy, Unnest, Flatten)):
        return (e.child,)
    if isinstance(e, (Union, Difference, NSemijoin)):
        return (e.left, e.right)
    return ()


def walk(e: NsaExpr):
    """Yield every node of the expression tree, parents before children."""
    yield e
    for c in children(e):
        yield from walk(c)


def format_expr(e: NsaExpr, env: Env | None = None, indent: str = "") -> str:
    """Indented tree rendering, with a scheme annotation per node if typeable."""
    note = ""
    if env is not None:
        try:
            note = f"  : {infer_scheme(e, env)}"
        except ExprTypeError as exc:
            note = f"  : ill-typed ({exc.rule})"
    label = type(e).__name__.lower()
    if isinstance(e, Rel):
        head = f"{indent}{e}{note}"
        return head
    if isinstance(e, GroupBy):
        label = f"groupby[{{{','.join(e.keys)}}}]"
    elif isinstance(e, Unnest):
        label = f"unnest[{e.target}]"
    elif isinstance(e, Project):
        label = f"project[{e.target}]"
    elif isinstance(e, Rename):
        label = "rename[" + ",".join(f"{a}->{b}" for a, b in e.mapping) + "]"
    elif isinstance(e, Select):
        label = "select"
    lines = [f"{indent}{label}{note}"]
    for c in children(e):
        lines.append(format_expr(c, env, indent + "  "))
    return "\n".join(lines)
