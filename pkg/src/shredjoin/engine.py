"""End-to-end pipeline: loading, four execution modes, and plan explanation.

The four modes answer the same full conjunctive query and must agree on the
result bag:

* ``binary`` — hash joins following the binary plan as given, instrumented;
* ``sya`` — the plan is rewritten to a two-phase nested-semijoin expression
  (after a repair into a join tree if it is ill-behaved) and executed over
  shredded representations, instrumented; the rare queries with no two-phase
  form (see ``run``) are answered through the ``ya-full`` pipeline instead;
* ``ya-full`` — the classic two semijoin passes over a GYO join tree, then
  hash joins over the reduced relations (only the joins are instrumented);
* ``oracle`` — the naive nested-loop reference.

Relations are flat named column sets; an atom ``R(x,y)`` binds a relation's
columns positionally to query attributes.  Per-relation filters, when given,
are applied to the base tables up front — before anything is shredded.
"""

from __future__ import annotations

import csv
import re
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import nsa_ops
from .columns import Column, PhysicalRelation
from .cost import Counters, UNIT_LINEAR, CostFunctions, static_cost_binary, static_cost_nsa, unit_tables
from .errors import AcyclicityError, AssumptionViolated, ExprTypeError, ParseError
from .exprs import (
    Difference,
    Flatten,
    GroupBy,
    NSemijoin,
    NsaExpr,
    Project,
    Rel,
    Rename,
    Select,
    Union,
    Unnest,
    format_expr,
    infer_scheme,
)
from .planner import (
    Atom,
    Cyclic,
    JoinQuery,
    JoinTree,
    Leaf,
    Plan,
    TreeNode,
    atoms,
    classic_ya_reduce,
    find_violation,
    format_plan,
    format_tree,
    gyo,
    is_well_behaved,
    parse_query,
    query_of_plan,
    repair,
    to_2nsa,
    tree_to_plan,
    walk_tree,
)
from .reference import DEFAULT_CAP, brute_force_join
from .schema import Predicate
from .shredded import ShreddedRelation, shred_flat

Value = int | str

KINDS = ("int", "str")


@dataclass
class Database:
    """Named flat relations; column names and kinds are fixed per relation."""

    relations: dict[str, PhysicalRelation]

    @property
    def cardinalities(self) -> dict[str, int]:
        return {name: len(rel) for name, rel in self.relations.items()}

    def raw_tables(self) -> dict[str, list[tuple[Value, ...]]]:
        return {name: rel.rows() for name, rel in self.relations.items()}

    def filtered(self, predicates: Mapping[str, Predicate]) -> "Database":
        """Apply per-relation predicates to the base tables (pre-shredding)."""
        out: dict[str, PhysicalRelation] = {}
        for name, rel in self.relations.items():
            pred = predicates.get(name)
            if pred is None:
                out[name] = rel
                continue
            names = rel.names
            kinds = [rel.column(n).kind for n in names]
            kept = [row for row in rel.rows() if pred.holds(dict(zip(names, row)))]
            out[name] = PhysicalRelation.from_rows(names, kept, kinds)
        return Database(out)


@dataclass
class RunReport:
    """Outcome of one execution: result, instrumentation, and provenance.

    ``rows`` hold the materialized result over ``attrs`` (sorted), or None
    under count-only.  For ya-full the counters cover the final join phase;
    the semijoin passes run uninstrumented.
    """

    mode: str
    plan_text: str | None
    expr_text: str | None
    attrs: tuple[str, ...]
    cardinality: int
    rows: list[tuple[Value, ...]] | None
    counters: Counters
    duration_s: float

    def stats_dict(self) -> dict:
        return {
            "mode": self.mode,
            "plan": self.plan_text,
            "expr": self.expr_text,
            "attrs": list(self.attrs),
            "rows": self.cardinality,
            "duration_s": round(self.duration_s, 6),
            "counters": self.counters.as_dict(),
            "cost_unit_linear": self.counters.totals["sum"],
        }


# -- loading ---------------------------------------------------------------------

_SCHEMA_LINE = re.compile(
    r"(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*\(\s*(?P<cols>[^)]*)\)\s*$"
)
_COL_DECL = re.compile(r"(?P<col>[A-Za-z_][A-Za-z0-9_]*)\s*:\s*(?P<kind>[a-z]+)\s*$")

SchemaDecl = dict[str, tuple[tuple[str, str], ...]]


def load_schema(path: str | Path) -> SchemaDecl:
    """Parse one relation declaration per line: ``T(z:int,u:int)``.

    Blank lines and ``#`` comments are ignored.  Returns name -> ordered
    (column, kind) pairs; kinds are ``int`` or ``str``.
    """
    decls: SchemaDecl = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SCHEMA_LINE.match(line)
        if m is None:
            raise ParseError(f"bad relation declaration {line!r}", line=lineno)
        name = m.group("name")
        if name in decls:
            raise ParseError(f"relation {name} declared twice", line=lineno)
        cols: list[tuple[str, str]] = []
        for part in m.group("cols").split(","):
            cm = _COL_DECL.match(part.strip())
            if cm is None:
                raise ParseError(
                    f"bad column declaration {part.strip()!r} in {name}", line=lineno
                )
            if cm.group("kind") not in KINDS:
                raise ParseError(
                    f"unknown kind {cm.group('kind')!r} (have {'/'.join(KINDS)})",
                    line=lineno,
                )
            cols.append((cm.group("col"), cm.group("kind")))
        if len({c for c, _ in cols}) != len(cols):
            raise ParseError(f"relation {name} repeats a column", line=lineno)
        if not cols:
            raise ParseError(f"relation {name} declares no columns", line=lineno)
        decls[name] = tuple(cols)
    if not decls:
        raise ParseError(f"schema file {path} declares no relations")
    return decls


def load_csv(path: str | Path, decl: Sequence[tuple[str, str]]) -> PhysicalRelation:
    """Read one relation: optional header row, then one row per tuple (bag).

    The header, when present, must match the declared column names in order.
    Cell values are parsed per the declared kind; failures carry row/column.
    """
    names = [c for c, _ in decl]
    kinds = [k for _, k in decl]
    rows: list[tuple[Value, ...]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for rowno, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if rowno == 1 and cells == names:
                continue
            if len(cells) != len(decl):
                raise ParseError(
                    f"{Path(path).name}: expected {len(decl)} values, got {len(cells)}",
                    line=rowno,
                )
            parsed: list[Value] = []
            for colno, (cell, kind) in enumerate(zip(cells, kinds), start=1):
                if kind == "int":
                    try:
                        parsed.append(int(cell))
                    except ValueError:
                        raise ParseError(
                            f"{Path(path).name}: {cell!r} is not an int",
                            line=rowno,
                            column=colno,
                        ) from None
                else:
                    parsed.append(cell)
            rows.append(tuple(parsed))
    return PhysicalRelation.from_rows(names, rows, kinds)


def load_db(schema_path: str | Path, data_dir: str | Path) -> Database:
    """Load every declared relation from ``<data_dir>/<name>.csv``."""
    decls = load_schema(schema_path)
    relations: dict[str, PhysicalRelation] = {}
    for name, cols in decls.items():
        path = Path(data_dir) / f"{name}.csv"
        if not path.exists():
            raise FileNotFoundError(f"no data file for {name}: {path}")
        relations[name] = load_csv(path, cols)
    return Database(relations)


def save_csv(
    path: str | Path, attrs: Sequence[str], rows: Sequence[tuple[Value, ...]]
) -> None:
    """Write header plus rows sorted lexicographically (diff-stable output)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(attrs)
        writer.writerows(sorted(rows))


# -- instance generators ------------------------------------------------------------

def diamond_query() -> JoinQuery:
    """The three-atom chain query the diamond instances are built for."""
    return parse_query("Q() :- R(x,y), S(y,z), T(z,u).")


def gen_diamond(n: int, variant: str) -> Database:
    """The two diamond-problem instances for the chain query, at scale ``n``.

    ``good``: each relation holds the matched chain (i, i) — every tuple
    participates and every intermediate stays linear.  ``bad``: the classic
    blow-up instance — R fans x2..x_{n+1} onto y_{n+1}, S links every y to z1
    and y_{n+1} to every z but z1, T fans z1 onto u1..u_n; the output has 2n
    tuples but the left-deep pairing R⋈S alone produces n²+1.
    """
    if n < 1:
        raise ValueError("diamond instances need n >= 1")
    if variant == "good":
        r = s = t = [(i, i) for i in range(1, n + 1)]
    elif variant == "bad":
        r = [(1, 1)] + [(i + 1, n + 1) for i in range(1, n + 1)]
        s = [(i, 1) for i in range(1, n + 1)] + [
            (n + 1, i + 1) for i in range(1, n + 1)
        ]
        t = [(1, i) for i in range(1, n + 1)] + [(n + 1, n + 1)]
    else:
        raise ValueError(f"unknown variant {variant!r} (good or bad)")
    kinds = ("int", "int")
    return Database(
        {
            "R": PhysicalRelation.from_rows(("x", "y"), r, kinds),
            "S": PhysicalRelation.from_rows(("y", "z"), s, kinds),
            "T": PhysicalRelation.from_rows(("z", "u"), t, kinds),
        }
    )


# -- executors -----------------------------------------------------------------------

def _bind(db: Database, atom: Atom) -> PhysicalRelation:
    """The base relation with columns renamed positionally to the atom's attrs."""
    try:
        base = db.relations[atom.name]
    except KeyError:
        raise ValueError(f"no relation named {atom.name}") from None
    if len(base.names) != len(atom.attrs):
        raise ValueError(
            f"atom {atom} binds {len(atom.attrs)} attributes but "
            f"{atom.name} has {len(base.names)} columns"
        )
    return PhysicalRelation.of(
        (base.column(n).renamed(a) for n, a in zip(base.names, atom.attrs)),
        nrows=len(base),
    )


def execute_binary(
    p: Plan, db: Database, counters: Counters
) -> tuple[tuple[str, ...], list[tuple[Value, ...]]]:
    """Hash-join the plan bottom-up: build right, probe left, generate.

    Output generation is accounted one event per output attribute (the
    columnar take), each with the output cardinality.
    """
    if isinstance(p, Leaf):
        bound = _bind(db, p.atom)
        return p.atom.attrs, bound.rows()
    lattrs, lrows = execute_binary(p.left, db, counters)
    rattrs, rrows = execute_binary(p.right, db, counters)
    shared = sorted(set(lattrs) & set(rattrs))
    li = [lattrs.index(a) for a in shared]
    ri = [rattrs.index(a) for a in shared]
    rrest = [i for i, a in enumerate(rattrs) if a not in set(shared)]
    hmap: dict[tuple[Value, ...], list[tuple[Value, ...]]] = {}
    for row in rrows:
        hmap.setdefault(tuple(row[i] for i in ri), []).append(row)
    counters.record_build(len(rrows))
    out: list[tuple[Value, ...]] = []
    for row in lrows:
        for match in hmap.get(tuple(row[i] for i in li), ()):
            out.append(row + tuple(match[i] for i in rrest))
    counters.record_probe(len(lrows), len(hmap))
    out_attrs = lattrs + tuple(a for i, a in enumerate(rattrs) if i in set(rrest))
    for _ in out_attrs:
        counters.record_gen(len(out))
    return out_attrs, out


def execute_nsa(e: NsaExpr, db: Database, counters: Counters):
    """Evaluate an NSA expression over shredded inputs, instrumented.

    Every input atom is shredded afresh (trivially, being flat), so the
    in-place column growth done by nested semijoins never leaks between
    occurrences of the same base relation.
    """
    env = {name: tuple(rel.names) for name, rel in db.relations.items()}
    infer_scheme(e, env)  # surface typing errors before any work

    def ev(node: NsaExpr):
        if isinstance(node, Rel):
            attrs_ = node.attrs if node.attrs is not None else env[node.name]
            return shred_flat(_bind(db, Atom(node.name, tuple(attrs_))))
        if isinstance(node, Select):
            return nsa_ops.select(ev(node.child), node.pred)
        if isinstance(node, Project):
            return nsa_ops.project(ev(node.child), node.target)
        if isinstance(node, Rename):
            return nsa_ops.rename(ev(node.child), dict(node.mapping))
        if isinstance(node, Union):
            return nsa_ops.union(ev(node.left), ev(node.right))
        if isinstance(node, Difference):
            return nsa_ops.difference(ev(node.left), ev(node.right))
        if isinstance(node, GroupBy):
            child = ev(node.child)
            value_scheme = child.scheme.minus(node.keys)
            return nsa_ops.groupby(child, node.keys, value_scheme, counters)
        if isinstance(node, NSemijoin):
            left = ev(node.left)
            return nsa_ops.nsemijoin(left, ev(node.right), counters)
        if isinstance(node, Unnest):
            return nsa_ops.unnest(ev(node.child), node.target, counters)
        if isinstance(node, Flatten):
            return nsa_ops.flatten(ev(node.child), counters)
        raise ValueError(f"unknown expression node {type(node).__name__}")

    return ev(e)


# -- the four modes ---------------------------------------------------------------------

MODES = ("binary", "sya", "ya-full", "oracle")


def _default_plan(query: JoinQuery) -> Plan:
    tree = gyo(query)
    if isinstance(tree, Cyclic):
        raise AcyclicityError(f"query is cyclic, no join tree exists: {query}")
    return tree_to_plan(tree)


def _gyo_tree(query: JoinQuery) -> JoinTree:
    tree = gyo(query)
    if isinstance(tree, Cyclic):
        raise AcyclicityError(f"query is cyclic, no join tree exists: {query}")
    return tree


def _occurrence_tree(tree: JoinTree) -> JoinTree:
    """The same tree with atoms renamed apart: R, R#2, R#3, …"""
    seen: dict[str, int] = {}

    def rebuild(node: TreeNode) -> TreeNode:
        seen[node.atom.name] = seen.get(node.atom.name, 0) + 1
        k = seen[node.atom.name]
        name = node.atom.name if k == 1 else f"{node.atom.name}#{k}"
        return TreeNode(
            Atom(name, node.atom.attrs), tuple(rebuild(c) for c in node.children)
        )

    return JoinTree(rebuild(tree.root))


def _base_name(occ_name: str) -> str:
    return occ_name.split("#", 1)[0]


def _classic_pipeline(
    query: JoinQuery, db: Database, counters: Counters
) -> tuple[Plan, tuple[str, ...], list[Row]]:
    """Full reduction over occurrence tables, then a binary join pass.

    Atoms are renamed apart so repeated relations get independent passes.
    Returns the executed plan plus the joined rows and their attribute
    order (callers still project/reorder to the query's output attrs).
    """
    occ_tree = _occurrence_tree(_gyo_tree(query))
    occ_tables = {
        n.atom.name: db.relations[_base_name(n.atom.name)].rows()
        for n in walk_tree(occ_tree.root)
    }
    reduced = classic_ya_reduce(occ_tree, occ_tables)
    occ_db = Database(
        {
            n.atom.name: PhysicalRelation.from_rows(
                n.atom.attrs,
                reduced[n.atom.name],
                [
                    db.relations[_base_name(n.atom.name)].column(c).kind
                    for c in db.relations[_base_name(n.atom.name)].names
                ],
            )
            for n in walk_tree(occ_tree.root)
        }
    )
    plan_ = tree_to_plan(occ_tree)
    battrs, brows = execute_binary(plan_, occ_db, counters)
    return plan_, battrs, brows


def run(
    db: Database,
    query: JoinQuery | None = None,
    plan: Plan | None = None,
    mode: str = "sya",
    count_only: bool = False,
    prefilters: Mapping[str, Predicate] | None = None,
    cap: int | None = None,
) -> RunReport:
    """Evaluate the query (or the given binary plan for it) in one mode.

    With both a query and a plan, the plan's atoms must be exactly the
    query's (same bag).  Without a plan, the deterministic default is the
    GYO tree's plan.  The sya path repairs ill-behaved plans into join trees
    first, falling back to the GYO tree when the repair's covering-atom
    assumption fails.

    A corner exists where no two-phase expression types: two sibling atoms
    whose attributes are all join attributes would both shred to pure weight
    holders, and one scheme cannot hold two of those.  The sya path then
    retries with the GYO tree (which chains comparable atoms) and, failing
    that, answers through the full-reduction pipeline; the report says so in
    ``expr_text``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r} (have {', '.join(MODES)})")
    if query is None and plan is None:
        raise ValueError("need a query, a plan, or both")
    if query is not None and plan is not None:
        if Counter(atoms(plan)) != Counter(query.atoms):
            raise ValueError(
                f"plan atoms {format_plan(plan)} do not match query {query}"
            )
    if query is None:
        query = query_of_plan(plan)
    if prefilters:
        db = db.filtered(prefilters)

    out_attrs = query.attrs
    counters = Counters()
    plan_text: str | None = None
    expr_text: str | None = None
    started = time.perf_counter()

    if mode == "oracle":
        bag = brute_force_join(
            [(a.name, a.attrs) for a in query.atoms],
            db.raw_tables(),
            cap=cap if cap is not None else DEFAULT_CAP,
        )
        cardinality = sum(bag.values())
        rows = None
        if not count_only:
            rows = [t for t, n in sorted(bag.items()) for _ in range(n)]
    elif mode == "ya-full":
        plan_, battrs, brows = _classic_pipeline(query, db, counters)
        plan_text = format_plan(plan_)
        rows = _reorder(battrs, brows, out_attrs)
        cardinality = len(rows)
        if count_only:
            rows = None
    elif mode == "binary":
        p = plan if plan is not None else _default_plan(query)
        plan_text = format_plan(p)
        battrs, brows = execute_binary(p, db, counters)
        rows = _reorder(battrs, brows, out_attrs)
        cardinality = len(rows)
        if count_only:
            rows = None
    else:  # sya
        p = plan if plan is not None else _default_plan(query)
        if not is_well_behaved(p):
            try:
                tree = repair(p, db.cardinalities)
            except AssumptionViolated:
                tree = _gyo_tree(query)
            p = tree_to_plan(tree)
        env = {name: tuple(rel.names) for name, rel in db.relations.items()}
        expr: NsaExpr | None = to_2nsa(p)
        try:
            infer_scheme(expr, env)
        except ExprTypeError:
            # A dictionary whose value scheme carries no attributes is a pure
            # weight holder, and two of those can never coexist as members of
            # one scheme.  Plans that join several atoms whose attributes are
            # all join attributes can hit this; the GYO tree chains such atoms
            # under each other instead of side by side, which usually
            # restores typability.
            p = tree_to_plan(_gyo_tree(query))
            expr = to_2nsa(p)
            try:
                infer_scheme(expr, env)
            except ExprTypeError:
                expr = None
        if expr is None:
            # No join tree admits a two-phase form (two sibling atoms whose
            # attribute sets are incomparable and swallowed by their parent's
            # join attributes).  Degrade to full reduction plus a join pass:
            # still no dangling intermediates, just extra passes.
            plan_, battrs, brows = _classic_pipeline(query, db, counters)
            plan_text = format_plan(plan_)
            expr_text = (
                "no two-phase form exists for this query; "
                "ran full reduction and a join pass instead"
            )
            rows = _reorder(battrs, brows, out_attrs)
            cardinality = len(rows)
            if count_only:
                rows = None
        else:
            plan_text = format_plan(p)
            expr_text = str(expr)
            result = execute_nsa(expr, db, counters)
            assert isinstance(result, ShreddedRelation)
            assert result.scheme.is_flat
            cardinality = len(result.sel)
            rows = None if count_only else [
                result.phys.row(pos, out_attrs) for pos in result.sel
            ]

    report = RunReport(
        mode=mode,
        plan_text=plan_text,
        expr_text=expr_text,
        attrs=out_attrs,
        cardinality=cardinality,
        rows=rows,
        counters=counters,
        duration_s=time.perf_counter() - started,
    )
    if report.rows is not None:
        assert len(report.rows) == report.cardinality
    return report


def _reorder(
    have: tuple[str, ...], rows: list[tuple[Value, ...]], want: tuple[str, ...]
) -> list[tuple[Value, ...]]:
    if have == tuple(want):
        return rows
    idx = [have.index(a) for a in want]
    return [tuple(r[i] for i in idx) for r in rows]


# -- explain ------------------------------------------------------------------------------

def explain(
    plan: Plan,
    tables: Mapping[str, Sequence[tuple[Value, ...]]] | None = None,
    funcs: CostFunctions = UNIT_LINEAR,
    cap: int | None = None,
) -> str:
    """Human-readable report: verdict, repaired tree, 2NSA form, static costs.

    Without tables, every base relation is costed as a single placeholder
    row, so the cost lines compare plan shapes rather than true work.
    """
    if cap is None:
        cap = DEFAULT_CAP
    plan_atoms = atoms(plan)
    placeholder = tables is None
    if tables is None:
        tables = unit_tables(plan_atoms)
    cards = {name: len(rows) for name, rows in tables.items()}

    lines = [f"binary plan: {format_plan(plan)}"]
    violation = find_violation(plan)
    executed = plan
    if violation is None:
        lines.append("well-behaved: yes")
    else:
        lines.append(f"well-behaved: no — ill-behaved {violation}")
        try:
            tree = repair(plan, cards)
            lines.append("repaired join tree (minimal extra builds):")
        except AssumptionViolated as exc:
            lines.append(f"repair assumption violated ({exc}); using the GYO tree")
            tree = _gyo_tree(query_of_plan(plan))
        lines.append(format_tree(tree, "  "))
        executed = tree_to_plan(tree)
        lines.append(f"executed plan: {format_plan(executed)}")

    expr: NsaExpr | None = to_2nsa(executed)
    env = {a.name: a.attrs for a in plan_atoms}
    lines.append("2nsa expression:")
    lines.append(format_expr(expr, env, "  "))
    try:
        infer_scheme(expr, env)
    except ExprTypeError:
        # Mirror the sya mode: retry with the GYO tree, else degrade.
        executed = tree_to_plan(_gyo_tree(query_of_plan(plan)))
        expr = to_2nsa(executed)
        try:
            infer_scheme(expr, env)
        except ExprTypeError:
            expr = None
        else:
            lines.append(
                "ill-typed above (two attribute-free nested members collide); "
                "the sya mode uses the GYO tree's form:"
            )
            lines.append(f"executed plan: {format_plan(executed)}")
            lines.append(format_expr(expr, env, "  "))

    binary_cost = static_cost_binary(plan, tables, funcs, cap)
    basis = "placeholder single-row tables" if placeholder else "loaded tables"
    family = "unit-linear" if funcs is UNIT_LINEAR else "custom cost family"
    if expr is None:
        lines.append(
            "no two-phase form exists (two attribute-free nested members "
            "collide on every join tree); the sya mode runs full reduction "
            "and a join pass"
        )
        lines.append(f"static cost ({basis}, {family}): binary={binary_cost:g}")
        return "\n".join(lines)
    nsa_cost = static_cost_nsa(expr, tables, funcs, cap)
    lines.append(
        f"static cost ({basis}, {family}): "
        f"binary={binary_cost:g} 2nsa={nsa_cost:g}"
    )
    return "\n".join(lines)
