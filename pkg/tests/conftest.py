"""Shared fixtures: the staged three-relation example and the nested golden.

``staged_db`` is the worked R/S/T instance whose intermediate shredded states
are asserted stage by stage in the operator and acceptance suites; its
expected values are frozen from an independent hand trace.
"""

from __future__ import annotations

import pytest

from shredjoin.columns import PhysicalRelation
from shredjoin.engine import Database
from shredjoin.planner import parse_plan, parse_query
from shredjoin.reference import NestedRel, NestedTuple
from shredjoin.schema import Scheme


@pytest.fixture
def staged_db() -> Database:
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


@pytest.fixture
def chain_query():
    return parse_query("Q() :- R(x,y), S(y,z), T(z,u).")


@pytest.fixture
def right_deep_plan():
    """R ⋈ (S ⋈ T): the well-behaved plan whose trace is the golden."""
    return parse_plan("(R(x,y) * (S(y,z) * T(z,u)))")


@pytest.fixture
def nested_golden() -> NestedRel:
    """Two-tuple nested relation over {x,{y},{u,{v}}} used as a shredding golden."""
    sy = Scheme.of("y")
    sv = Scheme.of("v")
    suv = Scheme.of("u", sv)
    scheme = Scheme.of("x", sy, suv)

    def ys(*vals):
        return NestedRel.of(sy, (NestedTuple.of({"y": v}) for v in vals))

    def vs(*vals):
        return NestedRel.of(sv, (NestedTuple.of({"v": v}) for v in vals))

    def uv(*pairs):
        return NestedRel.of(
            suv, (NestedTuple.of({"u": u, sv: inner}) for u, inner in pairs)
        )

    t1 = NestedTuple.of(
        {"x": "a1", sy: ys("b1", "b2"), suv: uv(("c1", vs("d1", "d2")), ("c2", vs("d1")))}
    )
    t2 = NestedTuple.of({"x": "a2", sy: ys("b1", "b3"), suv: uv(("c3", vs("d3", "d4")))})
    return NestedRel.of(scheme, (t1, t2))
