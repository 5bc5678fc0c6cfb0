"""Join-query planning.

Houses the textual query/plan formats, GYO join-tree construction, the
well-behaved test for binary plans, the dynamic-programming repair of
ill-behaved plans into join trees, the rewrites from binary plans to
nested-semijoin expressions, and the classic two-pass semijoin reduction.

A *binary plan* is a rooted binary tree whose leaves are atoms; each internal
node joins its left (probe side) and right (build side) subplans.  A *join
tree* is a rooted tree of atoms where, for every attribute, the nodes whose
atoms contain it form a connected subtree.  Well-behaved plans and join trees
are in one-to-one correspondence (``tree_to_plan`` / ``plan_to_tree``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from .errors import AssumptionViolated, NotWellBehaved, ParseError
from .exprs import (
    Flatten,
    GroupBy,
    NsaExpr,
    NSemijoin,
    Rel,
    SHRINKING,
    Unnest,
    children,
)
from .schema import Scheme


# -- queries and plans ----------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    """One relation occurrence with positionally bound attribute names."""

    name: str
    attrs: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "attrs", tuple(self.attrs))
        if len(set(self.attrs)) != len(self.attrs):
            raise ValueError(f"atom {self.name} repeats an attribute: {self.attrs}")
        if not self.attrs:
            raise ValueError(f"atom {self.name} has no attributes")

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.attrs)})"


@dataclass(frozen=True)
class JoinQuery:
    """A full conjunctive query: the natural join of its atoms."""

    atoms: tuple[Atom, ...]
    name: str = "Q"

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if not self.atoms:
            raise ValueError("a query needs at least one atom")

    @property
    def attrs(self) -> tuple[str, ...]:
        seen: set[str] = set()
        for a in self.atoms:
            seen.update(a.attrs)
        return tuple(sorted(seen))

    def __str__(self) -> str:
        return f"{self.name}() :- {', '.join(str(a) for a in self.atoms)}."


@dataclass(frozen=True)
class Leaf:
    atom: Atom


@dataclass(frozen=True)
class Join:
    left: "Plan"
    right: "Plan"


Plan = Leaf | Join


def leaves(p: Plan) -> tuple[Leaf, ...]:
    """All leaf occurrences, left to right."""
    if isinstance(p, Leaf):
        return (p,)
    return leaves(p.left) + leaves(p.right)


def atoms(p: Plan) -> tuple[Atom, ...]:
    return tuple(l.atom for l in leaves(p))


def attrs(p: Plan) -> frozenset[str]:
    out: set[str] = set()
    for a in atoms(p):
        out.update(a.attrs)
    return frozenset(out)


def ja(p: Plan) -> frozenset[str]:
    """Join attributes of the root node; the empty set for a leaf."""
    if isinstance(p, Leaf):
        return frozenset()
    return attrs(p.left) & attrs(p.right)


def lleaf(p: Plan) -> Atom:
    """The left-most leaf atom."""
    while isinstance(p, Join):
        p = p.left
    return p.atom


def la(p: Plan) -> frozenset[str]:
    """Attributes of the left-most leaf atom."""
    return frozenset(lleaf(p).attrs)


def format_plan(p: Plan) -> str:
    if isinstance(p, Leaf):
        return str(p.atom)
    return f"({format_plan(p.left)} * {format_plan(p.right)})"


def query_of_plan(p: Plan, name: str = "Q") -> JoinQuery:
    return JoinQuery(atoms(p), name)


# -- well-behavedness -------------------------------------------------------------

@dataclass(frozen=True)
class PlanViolation:
    """The first join node whose key attributes miss a left-most leaf."""

    node: Join
    side: str  # "left" or "right"
    join_attrs: frozenset[str]
    leftmost: frozenset[str]

    @property
    def operand(self) -> Plan:
        """The subplan whose left-most leaf misses the join attributes."""
        return self.node.left if self.side == "left" else self.node.right

    def __str__(self) -> str:
        return (
            f"at subplan {format_plan(self.operand)}: "
            f"ja={{{','.join(sorted(self.join_attrs))}}} "
            f"not within la={{{','.join(sorted(self.leftmost))}}}"
        )


def find_violation(p: Plan) -> PlanViolation | None:
    """The top-most well-behavedness violation, or None."""
    if isinstance(p, Leaf):
        return None
    j = ja(p)
    if not j <= la(p.left):
        return PlanViolation(p, "left", j, la(p.left))
    if not j <= la(p.right):
        return PlanViolation(p, "right", j, la(p.right))
    return find_violation(p.left) or find_violation(p.right)


def is_well_behaved(p: Plan) -> bool:
    """True iff every join's attributes reach both subplans' left-most leaves."""
    return find_violation(p) is None


# -- join trees -------------------------------------------------------------------

@dataclass(frozen=True)
class TreeNode:
    atom: Atom
    children: tuple["TreeNode", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class JoinTree:
    """A rooted tree of atoms satisfying the connectedness property."""

    root: TreeNode

    def __post_init__(self):
        problem = _connectedness_problem(self.root)
        if problem is not None:
            raise ValueError(f"not a join tree: {problem}")

    def nodes(self) -> tuple[TreeNode, ...]:
        return tuple(walk_tree(self.root))

    @property
    def atoms(self) -> tuple[Atom, ...]:
        return tuple(n.atom for n in self.nodes())

    def __str__(self) -> str:
        return format_tree(self)


@dataclass(frozen=True)
class Cyclic:
    """GYO result marker: the query admits no join tree."""

    query: JoinQuery


def walk_tree(node: TreeNode) -> Iterator[TreeNode]:
    yield node
    for c in node.children:
        yield from walk_tree(c)


def _connectedness_problem(root: TreeNode) -> str | None:
    """None if every attribute spans a connected subtree, else a description.

    A set of nodes is a connected subtree exactly when one of them tops all
    the others, i.e. when precisely one member's parent (if any) lies outside
    the set.
    """
    tops: dict[str, int] = {}

    def visit(node: TreeNode, parent_attrs: frozenset[str]) -> None:
        mine = frozenset(node.atom.attrs)
        for a in mine - parent_attrs:
            tops[a] = tops.get(a, 0) + 1
        for c in node.children:
            visit(c, mine)

    visit(root, frozenset())
    for a, n in sorted(tops.items()):
        if n > 1:
            return f"attribute '{a}' spans {n} disconnected subtrees"
    return None


def format_tree(t: JoinTree | TreeNode, indent: str = "") -> str:
    node = t.root if isinstance(t, JoinTree) else t
    lines = [f"{indent}{node.atom}"]
    for c in node.children:
        lines.append(format_tree(c, indent + "  "))
    return "\n".join(lines)


# -- GYO ear removal ----------------------------------------------------------------

def gyo(q: JoinQuery) -> JoinTree | Cyclic:
    """Join tree by classic ear removal, or Cyclic when no ear exists.

    An ear is an atom whose attributes shared with the remaining atoms are
    covered by one remaining atom (its witness); attributes private to the ear
    impose nothing.  The first ear in query order is removed each round and
    attached under its first witness, so the result is deterministic.
    Duplicate atoms are each other's witnesses and attach as children.
    """
    alive = list(range(len(q.atoms)))
    adopted: dict[int, list[int]] = {i: [] for i in alive}
    while len(alive) > 1:
        for i in alive:
            rest = [j for j in alive if j != i]
            shared = {
                a for a in q.atoms[i].attrs
                if any(a in q.atoms[j].attrs for j in rest)
            }
            witness = next(
                (j for j in rest if shared <= set(q.atoms[j].attrs)), None
            )
            if witness is not None:
                adopted[witness].append(i)
                alive.remove(i)
                break
        else:
            return Cyclic(q)

    def build(i: int) -> TreeNode:
        return TreeNode(q.atoms[i], tuple(build(c) for c in adopted[i]))

    return JoinTree(build(alive[0]))


# -- plan/tree correspondence --------------------------------------------------------

def tree_to_plan(t: JoinTree | TreeNode) -> Plan:
    """The left-deep-per-node plan ((A ⋈ P1) ⋈ …) ⋈ Pn; always well-behaved."""
    node = t.root if isinstance(t, JoinTree) else t

    def build(n: TreeNode) -> Plan:
        p: Plan = Leaf(n.atom)
        for c in n.children:
            p = Join(p, build(c))
        return p

    return build(node)


def plan_to_tree(p: Plan) -> JoinTree:
    """Inverse of tree_to_plan: collapse every join into its left child."""
    violation = find_violation(p)
    if violation is not None:
        raise NotWellBehaved(str(violation))

    def build(p: Plan) -> TreeNode:
        rights: list[Plan] = []
        while isinstance(p, Join):
            rights.append(p.right)
            p = p.left
        return TreeNode(p.atom, tuple(build(r) for r in reversed(rights)))

    return JoinTree(build(p))


# -- repair: ill-behaved plan -> join tree ---------------------------------------------

class _MutNode:
    __slots__ = ("atom", "children")

    def __init__(self, atom: Atom):
        self.atom = atom
        self.children: list[_MutNode] = []


def _covering(side: Plan, j: frozenset[str]) -> list[Leaf]:
    return [l for l in leaves(side) if j <= frozenset(l.atom.attrs)]


def _solve(p: Plan, cards: Mapping[str, int]):
    """Penalty table and per-node root choices for the repair recursion.

    For every subplan and every leaf occurrence A in it, ``delta`` holds the
    least extra build cost of a join tree over the subplan's atoms rooted at
    A.  Keeping the root on the left adds nothing; rooting from the right
    forces one extra build over some left-side atom B covering the join
    attributes, charged at B's base cardinality.  B is chosen to minimise
    that whole term (penalty plus cardinality), which makes the recursion an
    exact minimisation; ties break towards smaller cardinality, then name,
    then leaf position.
    """
    index = {id(l): i for i, l in enumerate(leaves(p))}

    def card(l: Leaf) -> int:
        try:
            return cards[l.atom.name]
        except KeyError:
            raise ValueError(f"no cardinality for relation {l.atom.name}") from None

    delta: dict[int, dict[int, int]] = {}
    choice: dict[int, tuple[Leaf, Leaf]] = {}

    def solve(node: Plan) -> dict[int, int]:
        if isinstance(node, Leaf):
            d = {id(node): 0}
        else:
            d1 = solve(node.left)
            d2 = solve(node.right)
            j = ja(node)
            if not j:
                raise AssumptionViolated(
                    f"cartesian join node {format_plan(node)}"
                )
            lcands = _covering(node.left, j)
            rcands = _covering(node.right, j)
            if not lcands or not rcands:
                side = "left" if not lcands else "right"
                raise AssumptionViolated(
                    f"no atom on the {side} of {format_plan(node)} covers "
                    f"join attributes {{{','.join(sorted(j))}}}"
                )
            b_right = min(
                rcands,
                key=lambda l: (d2[id(l)], card(l), l.atom.name, index[id(l)]),
            )
            b_left = min(
                lcands,
                key=lambda l: (d1[id(l)] + card(l), card(l), l.atom.name, index[id(l)]),
            )
            d = {}
            for l in leaves(node.left):
                d[id(l)] = d1[id(l)] + d2[id(b_right)]
            for l in leaves(node.right):
                d[id(l)] = d2[id(l)] + d1[id(b_left)] + card(b_left)
            choice[id(node)] = (b_right, b_left)
        delta[id(node)] = d
        return d

    solve(p)
    return index, card, delta, choice


def _choose_root(p: Plan, index, card, delta) -> Leaf:
    top = delta[id(p)]
    j = ja(p)
    candidates = [l for l in leaves(p) if j <= frozenset(l.atom.attrs)]
    return min(
        candidates,
        key=lambda l: (top[id(l)], card(l), l.atom.name, index[id(l)]),
    )


def repair(p: Plan, cards: Mapping[str, int]) -> JoinTree:
    """Convert a binary plan into a join tree of minimal extra build cost.

    ``cards`` maps relation names to base cardinalities (the charge for each
    extra build).  Requires every join node to have, on both sides, an atom
    covering its join attributes — otherwise AssumptionViolated, and the
    caller should fall back to a GYO tree for the query.
    """
    if isinstance(p, Leaf):
        return JoinTree(TreeNode(p.atom))
    index, card, delta, choice = _solve(p, cards)
    root = _choose_root(p, index, card, delta)

    def side_ids(side: Plan) -> set[int]:
        return {id(l) for l in leaves(side)}

    def build(node: Plan, a: Leaf) -> _MutNode:
        if isinstance(node, Leaf):
            assert node is a
            return _MutNode(node.atom)
        j = ja(node)
        b_right, b_left = choice[id(node)]
        if id(a) in side_ids(node.left):
            t1 = build(node.left, a)
            t2 = build(node.right, b_right)
        else:
            t1 = build(node.right, a)
            t2 = build(node.left, b_left)
        _topmost_covering(t1, j).children.append(t2)
        return t1

    def freeze(n: _MutNode) -> TreeNode:
        return TreeNode(n.atom, tuple(freeze(c) for c in n.children))

    return JoinTree(freeze(build(p, root)))


def repair_penalty(p: Plan, cards: Mapping[str, int]) -> int:
    """The δ value achieved by repair(p, cards): total extra build cost."""
    if isinstance(p, Leaf):
        return 0
    index, card, delta, _ = _solve(p, cards)
    return delta[id(p)][id(_choose_root(p, index, card, delta))]


def _topmost_covering(root: _MutNode, j: frozenset[str]) -> _MutNode:
    """Breadth-first search for the shallowest node containing all of ``j``.

    Connectedness makes the covering nodes a connected subtree, so the
    shallowest one is unique and tops the others.
    """
    queue = [root]
    while queue:
        node = queue.pop(0)
        if j <= frozenset(node.atom.attrs):
            return node
        queue.extend(node.children)
    raise AssertionError(f"no tree node covers {sorted(j)}")


# -- rewrites to NSA expressions ----------------------------------------------------------

def _rel(atom: Atom) -> Rel:
    return Rel(atom.name, atom.attrs)


def _ton(p: Plan) -> NsaExpr:
    """Replace every join by a nested semijoin against the grouped right side."""
    if isinstance(p, Leaf):
        return _rel(p.atom)
    keys = tuple(sorted(ja(p)))
    return NSemijoin(_ton(p.left), GroupBy(_ton(p.right), keys))


def to_2nsa(p: Plan) -> NsaExpr:
    """Two-phase nested-semijoin expression for a well-behaved plan.

    Phase one nests every join as semijoin-into-dictionary; phase two is one
    final flatten.  A single atom stays a bare input — flattening a flat
    relation would only copy it, and the binary plan it must not cost more
    than has cost zero.
    """
    violation = find_violation(p)
    if violation is not None:
        raise NotWellBehaved(str(violation))
    if isinstance(p, Leaf):
        return _rel(p.atom)
    return Flatten(_ton(p))


def binary_to_nsa_naive(p: Plan) -> NsaExpr:
    """Join-by-join embedding of a binary plan: unnest right after each join.

    The result is flat at every stage and costs exactly as much as the binary
    plan, but it is generally not two-phase.
    """
    if isinstance(p, Leaf):
        return _rel(p.atom)
    keys = frozenset(ja(p))
    target = Scheme.of(sorted(attrs(p.right) - keys))
    joined = NSemijoin(
        binary_to_nsa_naive(p.left),
        GroupBy(binary_to_nsa_naive(p.right), tuple(sorted(keys))),
    )
    return Unnest(joined, target)


def is_two_phase(e: NsaExpr) -> bool:
    """True iff every unnest/flatten has only non-shrinking ancestors."""

    def visit(node: NsaExpr, shrunk_above: bool) -> bool:
        if isinstance(node, (Unnest, Flatten)) and shrunk_above:
            return False
        below = shrunk_above or isinstance(node, SHRINKING)
        return all(visit(c, below) for c in children(node))

    return visit(e, False)


# -- classic Yannakakis reduction -------------------------------------------------------------

def classic_ya_reduce(
    t: JoinTree, tables: Mapping[str, Sequence[tuple]]
) -> dict[str, list[tuple]]:
    """Two-pass semijoin reduction over a join tree; returns the reduced bags.

    Pass one runs bottom-up (each node semijoined with its already-reduced
    children), pass two top-down (each child semijoined with its parent);
    afterwards no relation holds a dangling tuple.  Multiplicities and input
    order are preserved.  Atom names must be unique in the tree — rename
    occurrences first when a relation appears twice.
    """
    nodes = list(walk_tree(t.root))
    names = [n.atom.name for n in nodes]
    if len(set(names)) != len(names):
        raise ValueError(
            "classic_ya_reduce needs distinct atom names; rename occurrences first"
        )
    rows: dict[int, list[tuple]] = {}
    for n in nodes:
        try:
            base = tables[n.atom.name]
        except KeyError:
            raise ValueError(f"no table for atom {n.atom}") from None
        arity = len(n.atom.attrs)
        for r in base:
            if len(r) != arity:
                raise ValueError(
                    f"{n.atom.name} row {r!r} has {len(r)} values for {arity} attributes"
                )
        rows[id(n)] = list(base)

    def semijoin(keep: TreeNode, against: TreeNode) -> list[tuple]:
        shared = sorted(set(keep.atom.attrs) & set(against.atom.attrs))
        ki = [keep.atom.attrs.index(a) for a in shared]
        ai = [against.atom.attrs.index(a) for a in shared]
        keys = {tuple(r[i] for i in ai) for r in rows[id(against)]}
        return [r for r in rows[id(keep)] if tuple(r[i] for i in ki) in keys]

    def up(n: TreeNode) -> None:
        for c in n.children:
            up(c)
            rows[id(n)] = semijoin(n, c)

    def down(n: TreeNode) -> None:
        for c in n.children:
            rows[id(c)] = semijoin(c, n)
            down(c)

    up(t.root)
    down(t.root)
    return {n.atom.name: rows[id(n)] for n in nodes}


# -- parsing -----------------------------------------------------------------------------

_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|:-|[(),.*]")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class _Cursor:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos].isspace():
                pos += 1
                continue
            m = _TOKEN.match(text, pos)
            if m is None:
                raise ParseError(
                    f"unexpected character {text[pos]!r}", *self._line_col(pos)
                )
            self.tokens.append((m.group(), pos))
            pos = m.end()
        self.at = 0

    def _line_col(self, pos: int) -> tuple[int, int]:
        line = self.text.count("\n", 0, pos) + 1
        column = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, column

    def error(self, message: str) -> ParseError:
        if self.at < len(self.tokens):
            return ParseError(message, *self._line_col(self.tokens[self.at][1]))
        return ParseError(message + " (at end of input)")

    def peek(self) -> str | None:
        if self.at < len(self.tokens):
            return self.tokens[self.at][0]
        return None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            raise self.error(f"expected {expected!r}" if expected else "unexpected end")
        if expected is not None and tok != expected:
            raise self.error(f"expected {expected!r}, found {tok!r}")
        self.at += 1
        return tok

    def ident(self, what: str) -> str:
        tok = self.peek()
        if tok is None or not _IDENT.match(tok):
            raise self.error(f"expected {what}")
        self.at += 1
        return tok

    def done(self) -> None:
        if self.at < len(self.tokens):
            raise self.error(f"trailing input {self.peek()!r}")


def _parse_atom(c: _Cursor) -> Atom:
    name = c.ident("a relation name")
    c.take("(")
    attrs = [c.ident("an attribute name")]
    while c.peek() == ",":
        c.take(",")
        attrs.append(c.ident("an attribute name"))
    c.take(")")
    if len(set(attrs)) != len(attrs):
        raise c.error(f"atom {name} repeats an attribute")
    return Atom(name, tuple(attrs))


def parse_query(text: str) -> JoinQuery:
    """Parse ``Q() :- R(x,y), S(y,z), T(z,u).`` — an empty head, a body of
    atoms with pairwise-distinct attributes per atom, and a closing period.
    """
    c = _Cursor(text)
    name = c.ident("a query name")
    c.take("(")
    if c.peek() != ")":
        raise c.error("query heads take no arguments (every attribute is output)")
    c.take(")")
    c.take(":-")
    body = [_parse_atom(c)]
    while c.peek() == ",":
        c.take(",")
        body.append(_parse_atom(c))
    c.take(".")
    c.done()
    return JoinQuery(tuple(body), name)


def parse_plan(text: str) -> Plan:
    """Parse ``(R(x,y) * (S(y,z) * T(z,u)))`` — atoms and parenthesised joins."""
    c = _Cursor(text)
    plan = _parse_plan(c)
    c.done()
    return plan


def _parse_plan(c: _Cursor) -> Plan:
    if c.peek() == "(":
        c.take("(")
        left = _parse_plan(c)
        c.take("*")
        right = _parse_plan(c)
        c.take(")")
        return Join(left, right)
    return Leaf(_parse_atom(c))
