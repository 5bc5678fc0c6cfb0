"""Physical operators over shredded representations.

Each operator consumes and produces shredded representations so that
decode(op_phys(rep)) equals op_reference(decode(rep)) as bags.  The join
machinery — groupby (hash build), nested semijoin (hash probe), unnest and
flatten (output generation via take) — accepts an optional counter sink; the
remaining operators (select, project, rename, union, difference) are cheap
bookkeeping over selection vectors, column sets and offsets, and stay
uninstrumented.

Operators are pure apart from nested semijoin, which extends its input's
physical relation with the new head/weight columns in place (documented
contract: representations feed a tree-shaped pipeline, each produced once and
consumed once).
"""

from __future__ import annotations

from collections import Counter as _Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol

from .columns import Column, PhysicalRelation, Positions, Value, allsel, take
from .errors import ExprTypeError, NameClashError, StructuralError
from .exprs import rename_scheme
from .schema import (
    NXT,
    DictScheme,
    Predicate,
    Scheme,
    compatible,
    flat_attrs,
    hol_name,
    shred_scheme,
    sub_schemes,
    w_name,
)
from .shredded import (
    ShreddedDictionary,
    ShreddedRelation,
    Store,
    Violation,
    multiply_weights,
)


class OpSink(Protocol):
    """Counter interface the instrumented operators report into."""

    def record_build(self, size: int) -> None: ...

    def record_probe(self, probes: int, map_size: int) -> None: ...

    def record_gen(self, length: int) -> None: ...


@dataclass
class ListIterator:
    """Walks one linked list in a store relation: yields offsets until 0.

    Guards against malformed nxt chains by refusing to visit more offsets
    than the relation has rows.
    """

    rel: PhysicalRelation
    current: int
    _steps: int = 0

    def __iter__(self) -> "ListIterator":
        return self

    def __next__(self) -> int:
        if self.current == 0:
            raise StopIteration
        if self._steps >= len(self.rel):
            raise StructuralError([
                Violation("nxt acyclicity", "list iterator",
                          f"walked more than {len(self.rel)} offsets"),
            ])
        pos = self.current
        self.current = self.rel.column(NXT)[pos]
        self._steps += 1
        return pos


def itr(phys: PhysicalRelation, store: Store, y: Scheme, row: int) -> ListIterator:
    """Iterator over the inner list of nested member ``y`` at ``row``."""
    return ListIterator(store[y], phys.column(hol_name(y))[row])


def _require(cond: bool, rule: str, expr: object, detail: str) -> None:
    if not cond:
        raise ExprTypeError(rule, expr, detail)


# -- join machinery ---------------------------------------------------------------

def groupby(
    r: ShreddedRelation,
    ys: Iterable[str],
    z: Scheme,
    counters: OpSink | None = None,
) -> ShreddedDictionary:
    """Hash-build a dictionary keyed on the flat attributes ``ys``.

    The store gains one relation over ``z``: the non-key columns aliased
    straight from r.phys plus a fresh nxt column chaining rows with equal
    keys (most recent row at the head).  Rows outside r.sel keep nxt 0 and
    are unreachable from the hash map.
    """
    keys = tuple(sorted(ys))
    _require(set(keys) <= set(r.scheme.flats), "groupby", r.scheme,
             f"keys {list(keys)} are not flat members of {r.scheme}")
    _require(z == r.scheme.minus(keys), "groupby", r.scheme,
             f"value scheme {z} != {r.scheme} minus {list(keys)}")
    w = multiply_weights(r.phys, r.scheme)
    nxt = [0] * len(r.phys)
    hmap: dict[tuple[Value, ...], tuple[int, int]] = {}
    for i in r.sel:
        key = r.phys.row(i, keys)
        if key in hmap:
            j, prev_w = hmap[key]
            nxt[i - 1] = j
            hmap[key] = (i, prev_w + w[i - 1])
        else:
            hmap[key] = (i, w[i - 1])
    if counters is not None:
        counters.record_build(len(r.sel))
    entry = PhysicalRelation.of(
        [r.phys.column(u) for u in shred_scheme(z).columns]
        + [Column(NXT, tuple(nxt), "int")],
        nrows=len(r.phys),
    )
    store = r.store.copy()
    store.add(z, entry)
    return ShreddedDictionary(DictScheme(keys, z), hmap, store)


def nsemijoin(
    r: ShreddedRelation,
    d: ShreddedDictionary,
    counters: OpSink | None = None,
) -> ShreddedRelation:
    """Hash-probe ``d`` with every valid row of ``r``.

    Extends r.phys in place with hol/w columns for the dictionary's value
    scheme (misses keep (0, 0)); the new selection vector keeps the hits.
    """
    _require(compatible(r.scheme, d.dscheme), "nsemijoin", r.scheme,
             f"{r.scheme} is not compatible with {d.dscheme}")
    z = d.dscheme.value_scheme
    n = len(r.phys)
    hol = [0] * n
    w = [0] * n
    sel = []
    for i in r.sel:
        key = r.phys.row(i, d.dscheme.keys)
        hit = d.hmap.get(key)
        if hit is not None:
            sel.append(i)
            hol[i - 1], w[i - 1] = hit
    if counters is not None:
        counters.record_probe(len(r.sel), len(d.hmap))
    r.phys.add_column(Column(hol_name(z), tuple(hol), "int"))
    r.phys.add_column(Column(w_name(z), tuple(w), "int"))
    return ShreddedRelation(
        r.scheme.union(z), r.phys, r.store.disjoint_union(d.store), tuple(sel)
    )


def unnest(
    r: ShreddedRelation,
    y: Scheme,
    counters: OpSink | None = None,
) -> ShreddedRelation:
    """Pair every valid row with each element of its inner list for ``y``."""
    _require(y in r.scheme.nested, "unnest", r.scheme,
             f"{y} is not a nested member of {r.scheme}")
    pos_r: list[int] = []
    pos_y: list[int] = []
    for i in r.sel:
        for j in itr(r.phys, r.store, y, i):
            pos_r.append(i)
            pos_y.append(j)
    target = r.scheme.minus([y]).union(*y.members)
    entry = r.store[y]
    cols = [
        take(r.phys.column(u), pos_r, counters)
        for u in shred_scheme(r.scheme.minus([y])).columns
    ]
    cols += [
        take(entry.column(u), pos_y, counters)
        for u in shred_scheme(y).columns
    ]
    phys = PhysicalRelation.of(cols, nrows=len(pos_r))
    return ShreddedRelation(target, phys, r.store.without(y), allsel(phys))


def flatten(
    r: ShreddedRelation,
    counters: OpSink | None = None,
) -> ShreddedRelation:
    """Fully flatten, materializing each output attribute by a single take.

    Walks the representation once per nesting level; position and repetition
    vectors carry how often each stored row must appear in the output, so no
    intermediate relations are built.
    """
    top_w = multiply_weights(r.phys, r.scheme)
    n_out = sum(top_w[i - 1] for i in r.sel)
    cols: list[Column] = []
    _rflatten(r.phys, list(r.sel), [1] * len(r.sel), r.store, r.scheme, cols,
              counters)
    phys = PhysicalRelation.of(cols, nrows=n_out)
    return ShreddedRelation(
        Scheme.of(sorted(flat_attrs(r.scheme))), phys, Store(), allsel(phys)
    )


def _rflatten(
    phys: PhysicalRelation,
    pos: list[int],
    rep: list[int],
    store: Store,
    scheme: Scheme,
    out: list[Column],
    counters: OpSink | None,
) -> None:
    w = list(multiply_weights(phys, scheme))
    _generate(phys, pos, rep, w, scheme, out, counters)
    done = [1] * len(pos)
    for y in scheme.nested:
        wy = phys.column(w_name(y)).values
        # Remaining weight of the members still to flatten after y; rows not
        # in pos may hold weight 0 from a semijoin miss and are never read.
        w = [wk // wyk if wyk else 0 for wk, wyk in zip(w, wy)]
        npos: list[int] = []
        nrep: list[int] = []
        # Row order: earlier siblings vary slowest, the rep copies fastest.
        # So y's element list cycles once per earlier-sibling combination
        # (``done``), and each element's own expansion repeats once per
        # later-sibling combination and rep copy (``rep * w``).
        for row, i in enumerate(pos):
            for _ in range(done[row]):
                for j in itr(phys, store, y, i):
                    npos.append(j)
                    nrep.append(rep[row] * w[i - 1])
            done[row] *= wy[i - 1]
        _rflatten(store[y], npos, nrep, store, y, out, counters)


def _generate(
    phys: PhysicalRelation,
    pos: list[int],
    rep: list[int],
    w: list[int],
    scheme: Scheme,
    out: list[Column],
    counters: OpSink | None,
) -> None:
    rwpos: list[int] = []
    for i, rr in zip(pos, rep):
        rwpos.extend([i] * (rr * w[i - 1]))
    for u in scheme.flats:
        out.append(take(phys.column(u), rwpos, counters))


# -- standard operators -----------------------------------------------------------

def _compact(r: ShreddedRelation) -> tuple[PhysicalRelation, tuple[int, ...]]:
    """Restrict phys to the valid rows (no-op when sel is already full)."""
    if len(r.sel) == len(r.phys):
        return r.phys, r.sel
    phys = PhysicalRelation.of(
        (take(r.phys.column(u), r.sel) for u in r.phys.names),
        nrows=len(r.sel),
    )
    return phys, allsel(phys)


def select(r: ShreddedRelation, pred: Predicate) -> ShreddedRelation:
    """Keep the valid rows satisfying the predicate.

    On flat schemes the physical relation is compacted so that sel stays the
    identity (the flat-relation invariant the set operators rely on).
    """
    _require(pred.attrs <= set(r.scheme.flats), "select", r.scheme,
             f"predicate attributes {sorted(pred.attrs)} not flat in {r.scheme}")
    needed = tuple(pred.attrs)
    sel = tuple(
        i for i in r.sel
        if pred.holds({a: r.phys.column(a)[i] for a in needed})
    )
    out = ShreddedRelation(r.scheme, r.phys, r.store, sel)
    if r.scheme.is_flat and len(sel) < len(r.phys):
        phys, sel = _compact(out)
        return ShreddedRelation(r.scheme, phys, r.store, sel)
    return out


def project(r: ShreddedRelation, target: Scheme) -> ShreddedRelation:
    """Drop members outside ``target``; bag-based, cardinality preserved."""
    _require(all(m in r.scheme for m in target.members), "project", r.scheme,
             f"{target} is not a subset of {r.scheme}")
    phys = PhysicalRelation.of(
        (r.phys.column(u) for u in shred_scheme(target).columns),
        nrows=len(r.phys),
    )
    keep = sub_schemes(target)
    store = Store({s: rel for s, rel in r.store.rels.items() if s in keep})
    out = ShreddedRelation(target, phys, store, r.sel)
    if target.is_flat and len(r.sel) < len(phys):
        phys, sel = _compact(out)
        return ShreddedRelation(target, phys, store, sel)
    return out


def rename(r: ShreddedRelation, mapping: Mapping[str, str]) -> ShreddedRelation:
    """Apply a flat-attribute renaming across phys and every store relation."""
    attrs = flat_attrs(r.scheme)
    unknown = set(mapping) - attrs
    _require(not unknown, "rename", r.scheme,
             f"{sorted(unknown)} do not occur in {r.scheme}")
    total = {a: mapping.get(a, a) for a in attrs}
    if len(set(total.values())) != len(total):
        raise NameClashError(
            f"renaming {dict(mapping)} maps two attributes of {r.scheme} together"
        )
    phys = _rename_rel(r.phys, r.scheme, mapping, inner=False)
    store = Store({
        rename_scheme(y, mapping): _rename_rel(rel, y, mapping, inner=True)
        for y, rel in r.store.rels.items()
    })
    return ShreddedRelation(rename_scheme(r.scheme, mapping), phys, store, r.sel)


def _rename_rel(
    rel: PhysicalRelation,
    scheme: Scheme,
    mapping: Mapping[str, str],
    inner: bool,
) -> PhysicalRelation:
    colmap = {a: mapping.get(a, a) for a in scheme.flats}
    for z in scheme.nested:
        z2 = rename_scheme(z, mapping)
        colmap[hol_name(z)] = hol_name(z2)
        colmap[w_name(z)] = w_name(z2)
    if inner:
        colmap[NXT] = NXT
    return PhysicalRelation.of(
        (rel.column(c).renamed(colmap[c]) for c in rel.names),
        nrows=len(rel),
    )


def _offset_column(col: Column, n: int) -> Column:
    """Shift every non-zero entry by n (0 stays the list terminator)."""
    if n == 0:
        return col
    return Column(col.name, tuple(v + n if v else 0 for v in col.values), "int")


def _fix_rel(
    rel: PhysicalRelation,
    scheme: Scheme,
    store_r: Store,
    inner: bool,
) -> PhysicalRelation:
    """Shift the offsets of one right-operand relation for a store union.

    hol columns move by the size of the left store's relation they point
    into; nxt moves by the size of the left relation it chains within.
    """
    shift: dict[str, int] = {}
    for z in scheme.nested:
        shift[hol_name(z)] = len(store_r[z])
    if inner:
        shift[NXT] = len(store_r[scheme])
    return PhysicalRelation.of(
        (
            _offset_column(rel.column(c), shift[c]) if c in shift else rel.column(c)
            for c in rel.names
        ),
        nrows=len(rel),
    )


def _concat_rel(a: PhysicalRelation, b: PhysicalRelation) -> PhysicalRelation:
    cols = []
    for name in a.names:
        ca, cb = a.column(name), b.column(name)
        cols.append(Column(name, ca.values + cb.values, ca.kind or cb.kind))
    return PhysicalRelation.of(cols, nrows=len(a) + len(b))


def union(r1: ShreddedRelation, r2: ShreddedRelation) -> ShreddedRelation:
    """Bag union: compact both sides, append stores with shifted offsets.

    Every offset in the right operand (heads in phys and the store, nxt
    chains) is incremented by the size of the corresponding left relation,
    exactly compensating the append.
    """
    _require(r1.scheme == r2.scheme, "union", r1.scheme,
             f"operand schemes differ: {r1.scheme} vs {r2.scheme}")
    phys1, _ = _compact(r1)
    phys2, _ = _compact(r2)
    phys2 = _fix_rel(phys2, r1.scheme, r1.store, inner=False)
    store = Store({
        y: _concat_rel(r1.store[y], _fix_rel(r2.store[y], y, r1.store, inner=True))
        for y in r1.store.rels
    })
    phys = _concat_rel(phys1, phys2)
    return ShreddedRelation(r1.scheme, phys, store, allsel(phys))


def difference(r1: ShreddedRelation, r2: ShreddedRelation) -> ShreddedRelation:
    """Bag difference on flat relations (the only scheme the type rules allow)."""
    _require(r1.scheme == r2.scheme, "difference", r1.scheme,
             f"operand schemes differ: {r1.scheme} vs {r2.scheme}")
    _require(r1.scheme.is_flat, "difference", r1.scheme,
             f"difference needs a flat scheme, got {r1.scheme}")
    names = r1.phys.names
    remaining = _Counter(r2.phys.rows(names))
    kept = []
    for i in range(1, len(r1.phys) + 1):
        row = r1.phys.row(i, names)
        if remaining[row] > 0:
            remaining[row] -= 1
        else:
            kept.append(row)
    phys = PhysicalRelation.from_rows(
        names, kept, kinds=[r1.phys.column(n).kind for n in names]
    )
    return ShreddedRelation(r1.scheme, phys, Store(), allsel(phys))
