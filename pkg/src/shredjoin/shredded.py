"""The shredded (flat, columnar) representation of nested relations.

A nested relation over scheme X is a triple (phys, store, sel): ``phys`` is a
physical relation over shred(X) whose nested members became head-of-list and
weight columns, ``store`` maps every sub-scheme Y to a linked-list relation
over ishred(Y) (shred(Y) plus nxt), and ``sel`` is the selection vector of
valid rows.  Dictionaries are a hash map from key tuples to (head, weight)
pairs plus a store.

Offsets are 1-based; 0 terminates a list.  Rows filtered out by sel may keep
stale hol/w values — only sel-reachable rows are inspected by validate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .columns import Column, PhysicalRelation, Value, allsel, is_strictly_increasing
from .errors import SchemeError, StoreClashError, StructuralError
from .reference import DictValue, NestedRel, NestedTuple, weight_of
from .schema import (
    NXT,
    DictScheme,
    Scheme,
    hol_name,
    shred_scheme,
    sub_schemes,
    w_name,
)


@dataclass
class Store:
    """Maps each nested sub-scheme to its linked-list relation."""

    rels: dict[Scheme, PhysicalRelation] = field(default_factory=dict)

    def __contains__(self, scheme: Scheme) -> bool:
        return scheme in self.rels

    def __getitem__(self, scheme: Scheme) -> PhysicalRelation:
        return self.rels[scheme]

    def __iter__(self) -> Iterator[Scheme]:
        return iter(self.rels)

    def __len__(self) -> int:
        return len(self.rels)

    def add(self, scheme: Scheme, rel: PhysicalRelation) -> None:
        if scheme in self.rels:
            raise StoreClashError(f"store already holds {scheme}")
        self.rels[scheme] = rel

    def copy(self) -> "Store":
        return Store(dict(self.rels))

    def without(self, scheme: Scheme) -> "Store":
        return Store({s: r for s, r in self.rels.items() if s != scheme})

    def disjoint_union(self, other: "Store") -> "Store":
        overlap = set(self.rels) & set(other.rels)
        if overlap:
            raise StoreClashError(
                "stores overlap on " + ", ".join(str(s) for s in sorted(
                    overlap, key=lambda s: s.encode()))
            )
        merged = dict(self.rels)
        merged.update(other.rels)
        return Store(merged)


@dataclass
class ShreddedRelation:
    scheme: Scheme
    phys: PhysicalRelation
    store: Store
    sel: tuple[int, ...]

    @property
    def cardinality(self) -> int:
        """Number of represented tuples = number of valid rows."""
        return len(self.sel)


@dataclass
class ShreddedDictionary:
    dscheme: DictScheme
    hmap: dict[tuple[Value, ...], tuple[int, int]]
    store: Store

    @property
    def cardinality(self) -> int:
        return len(self.hmap)


def shred_flat(phys: PhysicalRelation, scheme: Scheme | None = None) -> ShreddedRelation:
    """Wrap a flat relation: empty store, identity selection vector."""
    if scheme is None:
        scheme = Scheme.of(phys.names)
    if not scheme.is_flat:
        raise SchemeError(f"shred_flat needs a flat scheme, got {scheme}")
    if set(phys.names) != set(scheme.flats):
        raise SchemeError(
            f"columns {list(phys.names)} do not match scheme {scheme}"
        )
    # Fresh container so no caller shares a mutable relation with the pipeline.
    copy = PhysicalRelation.of((phys.column(n) for n in phys.names), nrows=len(phys))
    return ShreddedRelation(scheme, copy, Store(), allsel(copy))


def multiply_weights(phys: PhysicalRelation, scheme: Scheme) -> tuple[int, ...]:
    """Per-row product of the weight columns of the nested members (1 if flat).

    Element k corresponds to row k+1 (columns are 1-based).
    """
    n = len(phys)
    weights = [1] * n
    for z in scheme.nested:
        wcol = phys.column(w_name(z))
        for k in range(n):
            weights[k] *= wcol.values[k]
    return tuple(weights)


def list_offsets(store_rel: PhysicalRelation, head: int) -> Iterator[int]:
    """Iterate the linked list starting at ``head`` (0 yields nothing)."""
    nxt = store_rel.column(NXT)
    curr = head
    steps = 0
    while curr != 0:
        yield curr
        curr = nxt[curr]
        steps += 1
        if steps > len(store_rel):
            raise StructuralError([Violation("nxt acyclicity", "list walk",
                                             f"cycle reached from head {head}")])


# -- validation -----------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    invariant: str
    location: str
    detail: str

    def __str__(self) -> str:
        return f"[{self.invariant}] {self.location}: {self.detail}"


def validate(rep: "ShreddedRelation | ShreddedDictionary") -> list[Violation]:
    """Check every representation invariant; violations are data, not errors."""
    if isinstance(rep, ShreddedDictionary):
        return _validate_dict(rep)
    return _validate_rel(rep)


def _expected_columns(scheme: Scheme, inner: bool) -> tuple[str, ...]:
    return shred_scheme(scheme, inner).columns


def _check_layout(rep_scheme: Scheme, phys: PhysicalRelation, store: Store,
                  loc: str, inner: bool) -> list[Violation]:
    out = []
    expected = set(_expected_columns(rep_scheme, inner))
    actual = set(phys.names)
    if expected != actual:
        out.append(Violation(
            "layout", loc,
            f"columns {sorted(actual)} != shredded scheme {sorted(expected)}"))
    want_store = sub_schemes(rep_scheme)
    have_store = set(store.rels)
    if want_store != have_store:
        out.append(Violation(
            "store domain", loc,
            f"store holds {[str(s) for s in have_store]}, "
            f"scheme needs {[str(s) for s in want_store]}"))
    return out


def _check_store_lists(store: Store) -> list[Violation]:
    out = []
    for scheme, rel in store.rels.items():
        loc = f"store({scheme})"
        if not rel.has_column(NXT):
            out.append(Violation("layout", loc, "missing nxt column"))
            continue
        nxt = rel.column(NXT)
        n = len(rel)
        for i in range(1, n + 1):
            v = nxt[i]
            if not isinstance(v, int) or not 0 <= v <= n:
                out.append(Violation("nxt range", loc, f"nxt[{i}] = {v!r}"))
        # Termination from every row (shared tails allowed, cycles not).
        state = [0] * (n + 1)  # 0 unknown, 1 in progress, 2 done
        for i in range(1, n + 1):
            path = []
            curr = i
            while curr != 0 and state[curr] == 0:
                state[curr] = 1
                path.append(curr)
                v = nxt[curr]
                curr = v if isinstance(v, int) and 0 <= v <= n else 0
            if curr != 0 and state[curr] == 1:
                out.append(Violation("nxt acyclicity", loc,
                                     f"cycle through row {curr}"))
                for p in path:
                    state[p] = 2
                break
            for p in path:
                state[p] = 2
    return out


def _validate_rel(rep: ShreddedRelation) -> list[Violation]:
    out: list[Violation] = []
    out += _check_layout(rep.scheme, rep.phys, rep.store, "phys", inner=False)
    out += _check_store_lists(rep.store)
    n = len(rep.phys)
    if not is_strictly_increasing(rep.sel):
        out.append(Violation("selection", "sel", f"{list(rep.sel)} is not strictly increasing"))
    elif rep.sel and not (1 <= rep.sel[0] and rep.sel[-1] <= n):
        out.append(Violation("selection", "sel", f"{list(rep.sel)} outside 1..{n}"))
    if rep.scheme.is_flat and tuple(rep.sel) != allsel(rep.phys):
        out.append(Violation("flat invariant", "sel",
                             "flat relations must select every row"))
    for scheme, rel in rep.store.rels.items():
        out += _check_layout(scheme, rel, Store({s: r for s, r in rep.store.rels.items()
                                                 if s in sub_schemes(scheme)}),
                             f"store({scheme})", inner=True)
    if out:
        return out
    # Structure is sound; now chase heads and weights from the valid rows.
    out += _check_reachable(rep.phys, rep.store, rep.scheme, rep.sel, "phys")
    return out


def _check_reachable(phys: PhysicalRelation, store: Store, scheme: Scheme,
                     rows: Iterable[int], loc: str) -> list[Violation]:
    out = []
    for z in scheme.nested:
        hol = phys.column(hol_name(z))
        wcol = phys.column(w_name(z))
        target = store[z]
        inner_rows = []
        for i in rows:
            head = hol[i]
            if not isinstance(head, int) or not 1 <= head <= len(target):
                out.append(Violation(
                    "head validity", loc,
                    f"hol{z}[{i}] = {head!r} not a row of store({z}) "
                    f"(inner relations are non-empty)"))
                continue
            chain = list(list_offsets(target, head))
            inner_rows.extend(chain)
            deeper = _check_reachable(target, store, z, chain, f"store({z})")
            if deeper:
                out.extend(deeper)
                continue
            w = sum(
                _row_weight(target, store, z, j) for j in chain
            )
            if wcol[i] != w:
                out.append(Violation(
                    "weight consistency", loc,
                    f"w{z}[{i}] = {wcol[i]} but flattening the list at "
                    f"hol{z}[{i}]={head} yields {w}"))
    return out


def _row_weight(phys: PhysicalRelation, store: Store, scheme: Scheme, i: int) -> int:
    w = 1
    for z in scheme.nested:
        w *= phys.column(w_name(z))[i]
    return w


def _validate_dict(d: ShreddedDictionary) -> list[Violation]:
    out: list[Violation] = []
    z = d.dscheme.value_scheme
    want_store = sub_schemes(z) | {z}
    have_store = set(d.store.rels)
    if want_store != have_store:
        out.append(Violation(
            "store domain", "dict",
            f"store holds {[str(s) for s in have_store]}, needs {[str(s) for s in want_store]}"))
    out += _check_store_lists(d.store)
    if out:
        return out
    target = d.store[z]
    for key, (head, w) in d.hmap.items():
        loc = f"hmap[{key}]"
        if len(key) != len(d.dscheme.keys):
            out.append(Violation("key arity", loc, f"expected {len(d.dscheme.keys)} values"))
            continue
        if not isinstance(head, int) or not 1 <= head <= len(target):
            out.append(Violation("head validity", loc, f"head {head!r} not a row of store({z})"))
            continue
        chain = list(list_offsets(target, head))
        deeper = _check_reachable(target, d.store, z, chain, f"store({z})")
        if deeper:
            out.extend(deeper)
            continue
        total = sum(_row_weight(target, d.store, z, j) for j in chain)
        if w != total:
            out.append(Violation("weight consistency", loc,
                                 f"weight {w} but list flattens to {total}"))
    return out


# -- decoding (test oracle direction) --------------------------------------------

def unshred(rep: "ShreddedRelation | ShreddedDictionary") -> NestedRel | DictValue:
    """Decode a shredded representation back into a reference value.

    Used by tests and the oracle only; raises StructuralError when the
    representation is invalid.
    """
    violations = validate(rep)
    if violations:
        raise StructuralError(violations)
    if isinstance(rep, ShreddedDictionary):
        z = rep.dscheme.value_scheme
        return DictValue.of(rep.dscheme, {
            key: _decode_list(rep.store[z], rep.store, z, head)
            for key, (head, _) in rep.hmap.items()
        })
    return NestedRel.of(
        rep.scheme,
        (_decode_tuple(rep.phys, rep.store, rep.scheme, i) for i in rep.sel),
    )


def _decode_tuple(phys: PhysicalRelation, store: Store, scheme: Scheme, i: int) -> NestedTuple:
    entries: dict = {}
    for a in scheme.flats:
        entries[a] = phys.column(a)[i]
    for z in scheme.nested:
        head = phys.column(hol_name(z))[i]
        entries[z] = _decode_list(store[z], store, z, head)
    return NestedTuple.of(entries)


def _decode_list(rel: PhysicalRelation, store: Store, scheme: Scheme, head: int) -> NestedRel:
    return NestedRel.of(
        scheme,
        (_decode_tuple(rel, store, scheme, j) for j in list_offsets(rel, head)),
    )


# -- encoding (reference value -> shredded) ---------------------------------------

def shred_value(value: NestedRel) -> ShreddedRelation:
    """Encode a reference nested relation (forward-chained linked lists).

    The inverse of unshred up to bag equality; lets tests build arbitrary
    shredded inputs directly from reference values.
    """
    builder = _StoreBuilder(value.scheme)
    columns: dict[str, list[Value]] = {c: [] for c in shred_scheme(value.scheme).columns}
    nrows = 0
    for t, n in value.items:
        for _ in range(n):
            _encode_into(t, value.scheme, columns, builder)
            nrows += 1
    phys = _finish_columns(columns, value.scheme, inner=False, nrows=nrows)
    return ShreddedRelation(value.scheme, phys, builder.finish(), allsel(phys))


def shred_dict_value(value: DictValue) -> ShreddedDictionary:
    z = value.dscheme.value_scheme
    builder = _StoreBuilder(z, include_root=True)
    hmap: dict[tuple[Value, ...], tuple[int, int]] = {}
    for key, rel in value.entries:
        head = builder.encode_list(rel, z)
        hmap[key] = (head, weight_of(rel))
    return ShreddedDictionary(value.dscheme, hmap, builder.finish())


class _StoreBuilder:
    def __init__(self, scheme: Scheme, include_root: bool = False):
        self.schemes = set(sub_schemes(scheme))
        if include_root:
            self.schemes.add(scheme)
        self.columns: dict[Scheme, dict[str, list]] = {
            s: {c: [] for c in shred_scheme(s, inner=True).columns}
            for s in self.schemes
        }

    def encode_list(self, rel: NestedRel, scheme: Scheme) -> int:
        """Append the bag's tuples as a forward-linked list; returns the head."""
        cols = self.columns[scheme]
        rows: list[int] = []
        for t, n in rel.items:
            for _ in range(n):
                _encode_into(t, scheme, cols, self)
                cols[NXT].append(0)  # patched below
                rows.append(len(cols[NXT]))
        for prev, nxt_row in zip(rows, rows[1:]):
            cols[NXT][prev - 1] = nxt_row
        return rows[0] if rows else 0

    def finish(self) -> Store:
        return Store({
            s: _finish_columns(cols, s, inner=True,
                               nrows=len(cols[NXT]))
            for s, cols in self.columns.items()
        })


def _encode_into(t: NestedTuple, scheme: Scheme, cols: dict[str, list],
                 builder: _StoreBuilder) -> None:
    for a in scheme.flats:
        cols[a].append(t[a])
    for z in scheme.nested:
        inner = t[z]
        assert isinstance(inner, NestedRel)
        head = builder.encode_list(inner, z)
        cols[hol_name(z)].append(head)
        cols[w_name(z)].append(weight_of(inner))


def _finish_columns(cols: Mapping[str, list], scheme: Scheme, inner: bool,
                    nrows: int) -> PhysicalRelation:
    ordered = shred_scheme(scheme, inner).columns
    built = []
    for name in ordered:
        kind = "int" if (name == NXT or name.startswith(("hol{", "w{"))) else None
        built.append(Column(name, tuple(cols[name]), kind))
    return PhysicalRelation.of(built, nrows=nrows)


# -- debug dump -------------------------------------------------------------------

def _fmt(v: Value) -> str:
    return str(v)


def _dump_phys(rel: PhysicalRelation, indent: str = "  ") -> str:
    lines = []
    for name in rel.names:
        col = rel.column(name)
        lines.append(f"{indent}{name} = [" + ", ".join(_fmt(v) for v in col) + "]")
    if not rel.names:
        lines.append(f"{indent}(no columns, {len(rel)} rows)")
    return "\n".join(lines)


def _dump_store(store: Store) -> list[str]:
    lines = []
    for scheme in sorted(store.rels, key=lambda s: s.encode()):
        lines.append(f"store({scheme}):")
        lines.append(_dump_phys(store[scheme]))
    return lines


def dump(rep: "ShreddedRelation | ShreddedDictionary") -> str:
    """Stable textual rendering of a representation, column-major."""
    if isinstance(rep, ShreddedDictionary):
        entries = "; ".join(
            f"{','.join(_fmt(v) for v in key)} -> ({head}, {w})"
            for key, (head, w) in sorted(rep.hmap.items(), key=lambda kv: kv[0])
        )
        lines = [f"dict {rep.dscheme}", f"  hmap: {entries}"]
        lines += _dump_store(rep.store)
        return "\n".join(lines)
    lines = [
        f"phys over {rep.scheme}  sel=[" + ", ".join(str(i) for i in rep.sel) + "]",
        _dump_phys(rep.phys),
    ]
    lines += _dump_store(rep.store)
    return "\n".join(lines)
