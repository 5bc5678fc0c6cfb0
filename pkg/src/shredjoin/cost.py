"""Abstract cost model for join machinery.

Three cost functions price the only operations the model charges for:
building a hash map over a relation, probing a map once per input tuple, and
generating an output column.  The same functions drive two views that must
agree exactly on every run:

* static costing (``static_cost_binary`` / ``static_cost_nsa``) from true
  cardinalities, computed here with the naive reference semantics, and
* live ``Counters`` that the executors feed while running; every build,
  probe loop, and column take appends one event.

Selections, projections, renames, and unions are deliberately uncosted — the
model prices join machinery only.
"""

from __future__ import annotations

from collections import Counter as _Bag
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import exprs, planner
from .errors import CapExceeded
from .reference import (
    DEFAULT_CAP,
    DictValue,
    NestedRel,
    NestedTuple,
    RawTable,
    ref_difference,
    ref_flatten,
    ref_groupby,
    ref_nsemijoin,
    ref_project,
    ref_rename,
    ref_select,
    ref_union,
    ref_unnest,
)
from .schema import Scheme, shred_scheme


@dataclass(frozen=True)
class CostFunctions:
    """Monotone prices for the three charged operations.

    ``c_build(n)``: hash map over an n-tuple relation; ``c_probe(n, m)``:
    n probes into an m-entry map; ``c_gen(n)``: one generated column of
    length n (charged once per output attribute, flat or nested).
    """

    c_build: Callable[[int], float]
    c_probe: Callable[[int, int], float]
    c_gen: Callable[[int], float]


#: Default prices: every operation costs its size. Keeps all totals integral,
#: so dominance and agreement checks can demand exact equality.
UNIT_LINEAR = CostFunctions(
    c_build=lambda n: n,
    c_probe=lambda n, m: n,
    c_gen=lambda n: n,
)


@dataclass
class Counters:
    """Append-only event log of one execution.

    ``builds`` holds the input cardinality of each hash map built, ``probes``
    holds (probe count, map size) per probing loop, and ``gens`` holds the
    length of each generated column.
    """

    builds: list[int] = field(default_factory=list)
    probes: list[tuple[int, int]] = field(default_factory=list)
    gens: list[int] = field(default_factory=list)

    def record_build(self, size: int) -> None:
        self.builds.append(size)

    def record_probe(self, n_probes: int, map_size: int) -> None:
        self.probes.append((n_probes, map_size))

    def record_gen(self, length: int) -> None:
        self.gens.append(length)

    @property
    def totals(self) -> dict[str, int]:
        build = sum(self.builds)
        probe = sum(n for n, _ in self.probes)
        gen = sum(self.gens)
        return {"build": build, "probe": probe, "gen": gen, "sum": build + probe + gen}

    def as_dict(self) -> dict:
        """JSON-ready form; see README for the documented schema."""
        return {
            "builds": list(self.builds),
            "probes": [list(p) for p in self.probes],
            "gens": list(self.gens),
            "totals": self.totals,
        }


def counters_to_cost(c: Counters, funcs: CostFunctions = UNIT_LINEAR) -> float:
    """Price a recorded event log; equals the unit-linear total by default."""
    return (
        sum(funcs.c_build(b) for b in c.builds)
        + sum(funcs.c_probe(n, m) for n, m in c.probes)
        + sum(funcs.c_gen(g) for g in c.gens)
    )


# -- static costing ------------------------------------------------------------

def _guard(size: int, cap: int | None) -> None:
    if cap is not None and size > cap:
        raise CapExceeded(f"static costing grew to {size} tuples (cap {cap})")


def _leaf_bag(
    atom: planner.Atom, tables: Mapping[str, RawTable]
) -> tuple[tuple[str, ...], _Bag]:
    try:
        rows = tables[atom.name]
    except KeyError:
        raise ValueError(f"no table for atom {atom}") from None
    out_attrs = tuple(sorted(atom.attrs))
    order = [atom.attrs.index(a) for a in out_attrs]
    bag: _Bag = _Bag()
    for row in rows:
        if len(row) != len(atom.attrs):
            raise ValueError(
                f"{atom.name} row {row!r} has {len(row)} values "
                f"for {len(atom.attrs)} attributes"
            )
        bag[tuple(row[i] for i in order)] += 1
    return out_attrs, bag


def _join_bags(
    lattrs: tuple[str, ...],
    left: _Bag,
    rattrs: tuple[str, ...],
    right: _Bag,
    cap: int | None,
) -> tuple[tuple[str, ...], _Bag, int]:
    """Natural join of two attribute-sorted bags; also returns the number of
    distinct join keys on the right (the built map's size)."""
    shared = sorted(set(lattrs) & set(rattrs))
    li = [lattrs.index(a) for a in shared]
    ri = [rattrs.index(a) for a in shared]
    rrest_attrs = [a for a in rattrs if a not in shared]
    rrest = [rattrs.index(a) for a in rrest_attrs]
    grouped: dict[tuple, list[tuple[tuple, int]]] = {}
    for rrow, n in right.items():
        key = tuple(rrow[i] for i in ri)
        grouped.setdefault(key, []).append((tuple(rrow[i] for i in rrest), n))
    out_attrs = tuple(sorted(set(lattrs) | set(rattrs)))
    merged_from = {a: ("l", i) for i, a in enumerate(lattrs)}
    merged_from.update({a: ("r", i) for i, a in enumerate(rrest_attrs)})
    out: _Bag = _Bag()
    total = 0
    for lrow, n in left.items():
        key = tuple(lrow[i] for i in li)
        for rrest_row, m in grouped.get(key, ()):  # type: ignore[arg-type]
            row = tuple(
                lrow[i] if side == "l" else rrest_row[i]
                for side, i in (merged_from[a] for a in out_attrs)
            )
            out[row] += n * m
            total += n * m
            _guard(total, cap)
    return out_attrs, out, len(grouped)


def static_cost_binary(
    p: planner.Plan,
    tables: Mapping[str, RawTable],
    funcs: CostFunctions = UNIT_LINEAR,
    cap: int | None = DEFAULT_CAP,
) -> float:
    """Total cost of a binary hash-join plan from true cardinalities.

    Per join node: build the right side, probe once per left tuple into a map
    with one entry per distinct key, then generate one column per output
    attribute.  A bare atom costs nothing.
    """
    cost = 0.0

    def walk(node: planner.Plan) -> tuple[tuple[str, ...], _Bag]:
        nonlocal cost
        if isinstance(node, planner.Leaf):
            return _leaf_bag(node.atom, tables)
        lattrs, left = walk(node.left)
        rattrs, right = walk(node.right)
        out_attrs, out, map_size = _join_bags(lattrs, left, rattrs, right, cap)
        cost += funcs.c_build(sum(right.values()))
        cost += funcs.c_probe(sum(left.values()), map_size)
        cost += len(out_attrs) * funcs.c_gen(sum(out.values()))
        return out_attrs, out

    walk(p)
    return cost


def static_cost_nsa(
    e: exprs.NsaExpr,
    tables: Mapping[str, RawTable],
    funcs: CostFunctions = UNIT_LINEAR,
    cap: int = DEFAULT_CAP,
) -> float:
    """Total cost of an NSA expression from true cardinalities.

    groupby costs one build over its input, nested semijoin one probe loop
    (map size = dictionary entries), unnest/flatten one generated column per
    physical output column at the output's cardinality — a flat attribute is
    one column, a remaining nested attribute a head/weight pair, matching
    what the shredded executor materializes.  The rest is uncosted.
    """
    cost = 0.0

    def bind(node: exprs.Rel) -> NestedRel:
        if node.attrs is None:
            raise ValueError(f"atom {node.name} must bind attributes for costing")
        try:
            rows = tables[node.name]
        except KeyError:
            raise ValueError(f"no table for atom {node}") from None
        scheme = Scheme.of(node.attrs)
        return NestedRel.of(
            scheme,
            (NestedTuple.of(dict(zip(node.attrs, row))) for row in rows),
        )

    def walk(node: exprs.NsaExpr) -> NestedRel | DictValue:
        nonlocal cost
        if isinstance(node, exprs.Rel):
            return bind(node)
        if isinstance(node, exprs.Select):
            return ref_select(walk(node.child), node.pred)
        if isinstance(node, exprs.Project):
            return ref_project(walk(node.child), node.target)
        if isinstance(node, exprs.Rename):
            return ref_rename(walk(node.child), dict(node.mapping))
        if isinstance(node, exprs.Union):
            return ref_union(walk(node.left), walk(node.right))
        if isinstance(node, exprs.Difference):
            return ref_difference(walk(node.left), walk(node.right))
        if isinstance(node, exprs.GroupBy):
            child = walk(node.child)
            cost += funcs.c_build(child.cardinality)
            return ref_groupby(child, node.keys)
        if isinstance(node, exprs.NSemijoin):
            left = walk(node.left)
            d = walk(node.right)
            cost += funcs.c_probe(left.cardinality, d.cardinality)
            return ref_nsemijoin(left, d)
        if isinstance(node, exprs.Unnest):
            out = ref_unnest(walk(node.child), node.target, cap)
            cost += len(shred_scheme(out.scheme).columns) * funcs.c_gen(
                out.cardinality
            )
            return out
        if isinstance(node, exprs.Flatten):
            out = ref_flatten(walk(node.child), cap)
            cost += len(shred_scheme(out.scheme).columns) * funcs.c_gen(
                out.cardinality
            )
            return out
        raise ValueError(f"unknown expression node {type(node).__name__}")

    walk(e)
    return cost


def unit_tables(atoms: Sequence[planner.Atom]) -> dict[str, list[tuple]]:
    """One all-zero row per relation: placeholder cardinalities for costing
    and explaining plans when no database is loaded."""
    out: dict[str, list[tuple]] = {}
    arity: dict[str, int] = {}
    for a in atoms:
        if a.name in arity and arity[a.name] != len(a.attrs):
            raise ValueError(
                f"atom {a.name} used with arities {arity[a.name]} and {len(a.attrs)}"
            )
        arity[a.name] = len(a.attrs)
        out[a.name] = [tuple(0 for _ in a.attrs)]
    return out
