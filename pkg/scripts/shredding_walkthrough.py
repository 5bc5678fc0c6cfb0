#!/usr/bin/env python3
"""Walk through one shredded evaluation of a three-relation chain query.

Executes R ⋉̂ Γ_y(S ⋉̂ Γ_z(T)) followed by a flatten on a small worked
instance, printing the shredded state after every operator: the dictionary
hash maps, the selection vectors, the head/weight column pairs that encode
nested members, and the linked-list stores.  Ends with the counter trace and
the static-cost comparison against the binary plan it was rewritten from.
"""

from __future__ import annotations

import argparse
import sys

from shredjoin import nsa_ops
from shredjoin.columns import PhysicalRelation
from shredjoin.cost import Counters, static_cost_binary, static_cost_nsa
from shredjoin.engine import Database, explain
from shredjoin.planner import parse_plan, to_2nsa
from shredjoin.schema import Scheme
from shredjoin.shredded import dump, shred_flat

BINARY_PLAN = "(R(x,y) * (S(y,z) * T(z,u)))"


def worked_instance() -> Database:
    kinds = ("str", "str")
    return Database(
        {
            "R": PhysicalRelation.from_rows(
                ("x", "y"), [("x1", "y1"), ("x2", "y3"), ("x3", "y3")], kinds
            ),
            "S": PhysicalRelation.from_rows(
                ("y", "z"),
                [("y1", "z1"), ("y2", "z1"), ("y3", "z2"), ("y3", "z3")],
                kinds,
            ),
            "T": PhysicalRelation.from_rows(
                ("z", "u"), [("z1", "u1"), ("z1", "u2"), ("z3", "u3")], kinds
            ),
        }
    )


def section(title: str) -> None:
    print(f"\n== {title} " + "=" * max(0, 68 - len(title)))


def main(argv=None) -> int:
    argparse.ArgumentParser(description=__doc__.splitlines()[0]).parse_args(argv)
    db = worked_instance()

    section("inputs")
    for name, rel in db.relations.items():
        print(f"{name}{rel.names}: {rel.rows()}")

    section("binary plan and its two-phase rewrite")
    print(explain(parse_plan(BINARY_PLAN)))

    counters = Counters()
    section("group T by its join attribute z  →  dictionary {z} -> {u}")
    d1 = nsa_ops.groupby(shred_flat(db.relations["T"]), ("z",), Scheme.of("u"), counters)
    print(dump(d1))
    print("(z2 never appears: S's tuple (y3,z2) can no longer contribute)")

    section("nested-semijoin S against it  →  {y,z,{u}}")
    s2 = nsa_ops.nsemijoin(shred_flat(db.relations["S"]), d1, counters)
    print(dump(s2))
    print("(row 3 fell out of sel; its (hol,w)=(0,0) slot is never read)")

    section("group that by y  →  dictionary {y} -> {z,{u}}")
    d2 = nsa_ops.groupby(s2, ("y",), s2.scheme.minus(("y",)), counters)
    print(dump(d2))

    section("nested-semijoin R against it  →  {x,y,{z,{u}}}")
    s4 = nsa_ops.nsemijoin(shred_flat(db.relations["R"]), d2, counters)
    print(dump(s4))
    print("(w multiplies through nesting: row 1 will flatten into 2 tuples)")

    section("flatten  →  the flat join result")
    out = nsa_ops.flatten(s4, counters)
    print(dump(out))
    rows = sorted(out.phys.row(i, ("u", "x", "y", "z")) for i in out.sel)
    print(f"result over (u,x,y,z): {rows}")

    section("work accounting")
    print(f"events: {counters.as_dict()}")
    tables = db.raw_tables()
    plan = parse_plan(BINARY_PLAN)
    print(
        f"static cost, unit-linear: binary={static_cost_binary(plan, tables)} "
        f"two-phase={static_cost_nsa(to_2nsa(plan), tables)} "
        f"executed={counters.totals['sum']}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
