"""Reference semantics used as the test oracle.

Nested relations are literal tree-shaped bags and every operator is a direct
transcription of its definition — nested loops, no hashing, no cleverness —
so correctness is auditable by eye.  A configurable cap guards against the
intentionally quadratic-plus blowup.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import exprs
from .errors import CapExceeded, ExprTypeError, SchemeError
from .exprs import Env, NsaExpr, infer_scheme
from .schema import DictScheme, Predicate, Scheme, SchemeMember

#: Ceiling on any intermediate bag size produced here.
DEFAULT_CAP = 10_000

Value = int | str


def _sort_key(obj) -> tuple:
    if isinstance(obj, int):
        return (0, obj)
    if isinstance(obj, str):
        return (1, obj)
    if isinstance(obj, tuple):
        return tuple(_sort_key(v) for v in obj)
    if isinstance(obj, NestedTuple):
        return tuple(_sort_key(v) for _, v in obj.entries)
    if isinstance(obj, NestedRel):
        return tuple((_sort_key(t), n) for t, n in obj.items)
    raise TypeError(f"unorderable {obj!r}")


@dataclass(frozen=True)
class NestedTuple:
    """Maps flat attributes to values and nested members to non-empty bags."""

    entries: tuple[tuple[SchemeMember, "Value | NestedRel"], ...]

    @staticmethod
    def of(mapping: Mapping[SchemeMember, "Value | NestedRel"]) -> "NestedTuple":
        items = sorted(
            mapping.items(),
            key=lambda kv: (0, kv[0]) if isinstance(kv[0], str) else (1, kv[0].encode()),
        )
        return NestedTuple(tuple(items))

    def __getitem__(self, member: SchemeMember):
        for k, v in self.entries:
            if k == member:
                return v
        raise KeyError(member)

    def as_dict(self) -> dict:
        return dict(self.entries)

    @property
    def flat_part(self) -> dict[str, Value]:
        return {k: v for k, v in self.entries if isinstance(k, str)}

    def restricted(self, members: Iterable[SchemeMember]) -> "NestedTuple":
        keep = set(members)
        return NestedTuple(tuple((k, v) for k, v in self.entries if k in keep))

    def merged(self, other: "NestedTuple") -> "NestedTuple":
        combined = self.as_dict()
        combined.update(other.as_dict())
        return NestedTuple.of(combined)


@dataclass(frozen=True)
class NestedRel:
    """A finite bag of nested tuples over one scheme."""

    scheme: Scheme
    items: tuple[tuple[NestedTuple, int], ...]

    @staticmethod
    def of(
        scheme: Scheme,
        tuples: Iterable[NestedTuple] = (),
        items: Iterable[tuple[NestedTuple, int]] = (),
    ) -> "NestedRel":
        bag: Counter[NestedTuple] = Counter()
        for t in tuples:
            bag[t] += 1
        for t, n in items:
            if n < 0:
                raise ValueError("negative multiplicity")
            bag[t] += n
        rel = NestedRel(
            scheme,
            tuple(sorted(((t, n) for t, n in bag.items() if n > 0),
                         key=lambda kv: _sort_key(kv[0]))),
        )
        rel._check()
        return rel

    @staticmethod
    def flat(scheme: Scheme, rows: Iterable[Sequence[Value]]) -> "NestedRel":
        """Build a flat bag from value rows given in sorted-attribute order."""
        attrs = scheme.flats
        return NestedRel.of(
            scheme,
            (NestedTuple.of(dict(zip(attrs, row))) for row in rows),
        )

    def _check(self) -> None:
        members = set(self.scheme.members)
        for t, _ in self.items:
            keys = [k for k, _ in t.entries]
            if set(keys) != members or len(keys) != len(members):
                raise SchemeError(
                    f"tuple members {keys} do not match scheme {self.scheme}"
                )
            for k, v in t.entries:
                if isinstance(k, str):
                    if not isinstance(v, (int, str)) or isinstance(v, bool):
                        raise SchemeError(f"flat attribute {k} holds {v!r}")
                else:
                    if not isinstance(v, NestedRel) or v.scheme != k:
                        raise SchemeError(f"nested member {k} holds a foreign value")
                    if not v.items:
                        raise SchemeError("inner nested relations must be non-empty")

    @property
    def cardinality(self) -> int:
        return sum(n for _, n in self.items)

    def counter(self) -> Counter:
        return Counter(dict(self.items))

    def __bool__(self) -> bool:
        return bool(self.items)


@dataclass(frozen=True)
class DictValue:
    """A finite map from flat key tuples to non-empty nested relations."""

    dscheme: DictScheme
    entries: tuple[tuple[tuple[Value, ...], NestedRel], ...]

    @staticmethod
    def of(
        dscheme: DictScheme, mapping: Mapping[tuple[Value, ...], NestedRel]
    ) -> "DictValue":
        for key, rel in mapping.items():
            if len(key) != len(dscheme.keys):
                raise SchemeError(f"key {key} has wrong arity for {dscheme}")
            if rel.scheme != dscheme.value_scheme or not rel.items:
                raise SchemeError(f"value for {key} does not fit {dscheme}")
        return DictValue(
            dscheme, tuple(sorted(mapping.items(), key=lambda kv: _sort_key(kv[0])))
        )

    def get(self, key: tuple[Value, ...]) -> NestedRel | None:
        for k, v in self.entries:
            if k == key:
                return v
        return None

    @property
    def cardinality(self) -> int:
        return len(self.entries)


def _guard(size: int, cap: int) -> None:
    if size > cap:
        raise CapExceeded(f"reference evaluation grew to {size} tuples (cap {cap})")


# -- operators ----------------------------------------------------------------

def ref_select(rel: NestedRel, pred: Predicate) -> NestedRel:
    return NestedRel.of(
        rel.scheme,
        items=((t, n) for t, n in rel.items if pred.holds(t.flat_part)),
    )


def ref_project(rel: NestedRel, target: Scheme) -> NestedRel:
    return NestedRel.of(
        target, items=((t.restricted(target.members), n) for t, n in rel.items)
    )


def ref_rename(rel: NestedRel, mapping: Mapping[str, str]) -> NestedRel:
    def ren_tuple(t: NestedTuple) -> NestedTuple:
        out = {}
        for k, v in t.entries:
            if isinstance(k, str):
                out[mapping.get(k, k)] = v
            else:
                out[exprs.rename_scheme(k, mapping)] = ren_rel(v)
        return NestedTuple.of(out)

    def ren_rel(r: NestedRel) -> NestedRel:
        return NestedRel.of(
            exprs.rename_scheme(r.scheme, mapping),
            items=((ren_tuple(t), n) for t, n in r.items),
        )

    return ren_rel(rel)


def ref_union(a: NestedRel, b: NestedRel) -> NestedRel:
    if a.scheme != b.scheme:
        raise SchemeError("union over different schemes")
    return NestedRel.of(a.scheme, items=tuple(a.items) + tuple(b.items))


def ref_difference(a: NestedRel, b: NestedRel) -> NestedRel:
    if a.scheme != b.scheme or not a.scheme.is_flat:
        raise SchemeError("difference requires identical flat schemes")
    remaining = a.counter()
    remaining.subtract(b.counter())
    return NestedRel.of(a.scheme, items=((t, n) for t, n in remaining.items() if n > 0))


def ref_groupby(rel: NestedRel, keys: Sequence[str]) -> DictValue:
    keys = tuple(sorted(keys))
    value_scheme = rel.scheme.minus(keys)
    groups: dict[tuple[Value, ...], Counter] = {}
    for t, n in rel.items:
        key = tuple(t[k] for k in keys)
        groups.setdefault(key, Counter())[t.restricted(value_scheme.members)] += n
    return DictValue.of(
        DictScheme(keys, value_scheme),
        {
            key: NestedRel.of(value_scheme, items=bag.items())
            for key, bag in groups.items()
        },
    )


def ref_nsemijoin(rel: NestedRel, d: DictValue) -> NestedRel:
    out_scheme = rel.scheme.union(d.dscheme.value_scheme)
    out = []
    for t, n in rel.items:
        key = tuple(t[k] for k in d.dscheme.keys)
        inner = d.get(key)
        if inner is not None:
            out.append((t.merged(NestedTuple.of({d.dscheme.value_scheme: inner})), n))
    return NestedRel.of(out_scheme, items=out)


def ref_unnest(rel: NestedRel, target: Scheme, cap: int = DEFAULT_CAP) -> NestedRel:
    out_scheme = rel.scheme.minus([target]).union(*target.members)
    out: list[tuple[NestedTuple, int]] = []
    total = 0
    for t, n in rel.items:
        inner = t[target]
        assert isinstance(inner, NestedRel)
        rest = t.restricted(rel.scheme.minus([target]).members)
        for s, m in inner.items:
            out.append((rest.merged(s), n * m))
            total += n * m
            _guard(total, cap)
    return NestedRel.of(out_scheme, items=out)


def ref_flatten(rel: NestedRel, cap: int = DEFAULT_CAP) -> NestedRel:
    while not rel.scheme.is_flat:
        rel = ref_unnest(rel, rel.scheme.nested[0], cap)
    return rel


def weight_of(v: "NestedRel | NestedTuple") -> int:
    """Number of tuples a full flatten of ``v`` produces (1 for flat tuples)."""
    if isinstance(v, NestedTuple):
        w = 1
        for _, inner in v.entries:
            if isinstance(inner, NestedRel):
                w *= weight_of(inner)
        return w
    return sum(n * weight_of(t) for t, n in v.items)


# -- expression evaluation ------------------------------------------------------

Tables = Mapping[str, "NestedRel"]


def ref_eval(
    e: NsaExpr, tables: Tables, env: Env | None = None, cap: int = DEFAULT_CAP
) -> NestedRel | DictValue:
    """Literal evaluation of an NSA expression over flat input relations.

    ``tables`` maps relation names to flat NestedRels whose attribute order
    (sorted) matches the declared column order used by Rel-atom rebinding.
    """
    if env is None:
        env = {name: rel.scheme for name, rel in tables.items()}
    infer_scheme(e, env)  # typing errors surface before any work

    def ev(e: NsaExpr) -> NestedRel | DictValue:
        if isinstance(e, exprs.Rel):
            rel = tables[e.name]
            if e.attrs is None:
                return rel
            declared = _declared_order(env[e.name])
            return ref_rename(rel, dict(zip(declared, e.attrs)))
        if isinstance(e, exprs.Select):
            return ref_select(ev(e.child), e.pred)
        if isinstance(e, exprs.Project):
            return ref_project(ev(e.child), e.target)
        if isinstance(e, exprs.Rename):
            return ref_rename(ev(e.child), dict(e.mapping))
        if isinstance(e, exprs.Union):
            return ref_union(ev(e.left), ev(e.right))
        if isinstance(e, exprs.Difference):
            return ref_difference(ev(e.left), ev(e.right))
        if isinstance(e, exprs.GroupBy):
            return ref_groupby(ev(e.child), e.keys)
        if isinstance(e, exprs.NSemijoin):
            return ref_nsemijoin(ev(e.left), ev(e.right))
        if isinstance(e, exprs.Unnest):
            return ref_unnest(ev(e.child), e.target, cap)
        if isinstance(e, exprs.Flatten):
            return ref_flatten(ev(e.child), cap)
        raise ExprTypeError("input", e, "unknown node")

    return ev(e)


def _declared_order(decl) -> tuple[str, ...]:
    if isinstance(decl, Scheme):
        return decl.flats
    return tuple(decl)


# -- brute-force flat join -----------------------------------------------------

RawTable = Sequence[Sequence[Value]]


def brute_force_join(
    atoms: Sequence[tuple[str, Sequence[str]]],
    tables: Mapping[str, RawTable],
    cap: int = DEFAULT_CAP,
) -> Counter:
    """Nested-loop natural join with exact bag multiplicities.

    ``atoms`` are (relation name, attribute tuple) pairs; attributes bind the
    relation's columns positionally.  Returns a Counter over value tuples in
    sorted attribute order (see ``join_attrs``).  Works for cyclic queries too.
    """
    out_attrs = join_attrs(atoms)
    partial: list[tuple[dict[str, Value], int]] = [({}, 1)]
    for name, attrs in atoms:
        rows = tables[name]
        extended: list[tuple[dict[str, Value], int]] = []
        for env, mult in partial:
            for row in rows:
                if len(row) != len(attrs):
                    raise SchemeError(
                        f"{name} row has {len(row)} values for {len(attrs)} attributes"
                    )
                bound = dict(env)
                ok = True
                for attr, value in zip(attrs, row):
                    if attr in bound:
                        if bound[attr] != value:
                            ok = False
                            break
                    else:
                        bound[attr] = value
                if ok:
                    extended.append((bound, mult))
                    _guard(len(extended), cap)
        partial = extended
    result: Counter = Counter()
    for env, mult in partial:
        result[tuple(env[a] for a in out_attrs)] += mult
    return result


def join_attrs(atoms: Sequence[tuple[str, Sequence[str]]]) -> tuple[str, ...]:
    seen: set[str] = set()
    for _, attrs in atoms:
        seen.update(attrs)
    return tuple(sorted(seen))
