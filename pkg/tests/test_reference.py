"""Reference (denotational) nested values and operators — the test oracle."""

import pytest
from collections import Counter

from shredjoin.errors import CapExceeded, SchemeError
from shredjoin.exprs import Flatten, GroupBy, NSemijoin, Rel
from shredjoin.reference import (
    DictValue,
    NestedRel,
    NestedTuple,
    brute_force_join,
    ref_difference,
    ref_eval,
    ref_flatten,
    ref_groupby,
    ref_nsemijoin,
    ref_project,
    ref_rename,
    ref_select,
    ref_union,
    ref_unnest,
    weight_of,
)
from shredjoin.schema import Predicate, Scheme, comparison

SY = Scheme.of("y")
SXY = Scheme.of("x", SY)


def nt(**flats):
    return NestedTuple.of(flats)


def ys(*vals):
    return NestedRel.of(SY, (NestedTuple.of({"y": v}) for v in vals))


class TestValues:
    def test_bag_construction_merges_duplicates(self):
        rel = NestedRel.of(Scheme.of("a"), (nt(a=1), nt(a=1), nt(a=2)))
        assert rel.counter() == Counter({nt(a=1): 2, nt(a=2): 1})
        assert rel.cardinality == 3

    def test_flat_builder_uses_sorted_attr_order(self):
        rel = NestedRel.flat(Scheme.of("b", "a"), [(1, 2)])
        assert rel.items[0][0].as_dict() == {"a": 1, "b": 2}

    def test_tuples_must_match_scheme(self):
        with pytest.raises(SchemeError):
            NestedRel.of(Scheme.of("a"), (nt(b=1),))
        with pytest.raises(SchemeError):
            NestedRel.of(SXY, (nt(x=1),))  # missing nested member

    def test_inner_relations_must_be_non_empty(self):
        with pytest.raises(SchemeError):
            NestedRel.of(SXY, (NestedTuple.of({"x": 1, SY: NestedRel.of(SY)}),))

    def test_weight_is_full_flatten_size(self):
        rel = NestedRel.of(
            SXY,
            (
                NestedTuple.of({"x": 1, SY: ys(1, 2)}),
                NestedTuple.of({"x": 2, SY: ys(3)}),
            ),
        )
        assert weight_of(rel) == 3
        assert weight_of(rel.items[0][0]) == 2

    def test_dict_value_checks_fit(self):
        from shredjoin.schema import DictScheme

        d = DictScheme(("k",), SY)
        DictValue.of(d, {(1,): ys(1)})
        with pytest.raises(SchemeError):
            DictValue.of(d, {(1, 2): ys(1)})  # arity
        with pytest.raises(SchemeError):
            DictValue.of(d, {(1,): NestedRel.of(SY)})  # empty value


class TestOperators:
    def test_select_sees_only_flat_attrs(self):
        rel = NestedRel.of(
            SXY,
            (
                NestedTuple.of({"x": 1, SY: ys(1)}),
                NestedTuple.of({"x": 5, SY: ys(2)}),
            ),
        )
        kept = ref_select(rel, Predicate.of(comparison("x", "<", 3)))
        assert kept.cardinality == 1 and kept.items[0][0]["x"] == 1

    def test_project_keeps_multiplicities(self):
        rel = NestedRel.flat(Scheme.of("a", "b"), [(1, 1), (1, 2)])
        out = ref_project(rel, Scheme.of("a"))
        assert out.counter() == Counter({nt(a=1): 2})

    def test_rename_renames_nested_occurrences(self):
        rel = NestedRel.of(SXY, (NestedTuple.of({"x": 1, SY: ys(7)}),))
        out = ref_rename(rel, {"y": "b", "x": "a"})
        assert out.scheme == Scheme.of("a", Scheme.of("b"))
        inner = out.items[0][0][Scheme.of("b")]
        assert inner.items[0][0]["b"] == 7

    def test_union_adds_and_difference_subtracts_bags(self):
        a = NestedRel.flat(Scheme.of("a"), [(1,), (1,), (2,)])
        b = NestedRel.flat(Scheme.of("a"), [(1,), (3,)])
        assert ref_union(a, b).counter() == Counter(
            {nt(a=1): 3, nt(a=2): 1, nt(a=3): 1}
        )
        assert ref_difference(a, b).counter() == Counter({nt(a=1): 1, nt(a=2): 1})
        with pytest.raises(SchemeError):
            ref_difference(a, NestedRel.flat(Scheme.of("b"), [(1,)]))

    def test_groupby_partitions_by_keys(self):
        rel = NestedRel.flat(Scheme.of("y", "z"), [(1, 7), (1, 8), (2, 7), (1, 7)])
        d = ref_groupby(rel, ("y",))
        assert d.cardinality == 2
        assert d.get((1,)).counter() == Counter({nt(z=7): 2, nt(z=8): 1})
        assert d.get((2,)).counter() == Counter({nt(z=7): 1})
        assert d.get((3,)) is None

    def test_nsemijoin_keeps_hits_and_nests_the_group(self):
        r = NestedRel.flat(Scheme.of("x", "y"), [(1, 1), (2, 2), (3, 1)])
        d = ref_groupby(NestedRel.flat(Scheme.of("y", "z"), [(1, 7), (1, 8)]), ("y",))
        out = ref_nsemijoin(r, d)
        sz = Scheme.of("z")
        assert out.scheme == Scheme.of("x", "y", sz)
        assert out.cardinality == 2  # y=2 has no group: dropped
        for t, _ in out.items:
            assert t[sz].counter() == Counter({nt(z=7): 1, nt(z=8): 1})

    def test_unnest_multiplies_multiplicities(self):
        rel = NestedRel.of(
            SXY, items=[(NestedTuple.of({"x": 1, SY: ys(5, 5, 6)}), 2)]
        )
        out = ref_unnest(rel, SY)
        assert out.counter() == Counter({nt(x=1, y=5): 4, nt(x=1, y=6): 2})

    def test_flatten_is_iterated_unnest(self):
        sv = Scheme.of("v")
        suv = Scheme.of("u", sv)
        scheme = Scheme.of("x", suv)
        rel = NestedRel.of(
            scheme,
            (
                NestedTuple.of(
                    {
                        "x": 1,
                        suv: NestedRel.of(
                            suv,
                            (
                                NestedTuple.of(
                                    {"u": 10, sv: NestedRel.flat(sv, [(100,), (200,)])}
                                ),
                            ),
                        ),
                    }
                ),
            ),
        )
        out = ref_flatten(rel)
        assert out.scheme == Scheme.of("u", "v", "x")
        assert out.cardinality == weight_of(rel) == 2

    def test_unnest_cap(self):
        rel = NestedRel.of(SXY, (NestedTuple.of({"x": i, SY: ys(1, 2, 3)}) for i in range(10)))
        with pytest.raises(CapExceeded):
            ref_unnest(rel, SY, cap=20)


class TestRefEval:
    def test_pipeline_equals_brute_force(self):
        tables = {
            "R": NestedRel.flat(Scheme.of("x", "y"), [(1, 1), (2, 3)]),
            "S": NestedRel.flat(Scheme.of("y", "z"), [(1, 5), (3, 6), (3, 6)]),
        }
        e = Flatten(NSemijoin(Rel("R"), GroupBy(Rel("S"), ("y",))))
        out = ref_eval(e, tables)
        expected = brute_force_join(
            [("R", ("x", "y")), ("S", ("y", "z"))],
            {"R": [(1, 1), (2, 3)], "S": [(1, 5), (3, 6), (3, 6)]},
        )
        got = Counter()
        for t, n in out.items:
            got[tuple(t[a] for a in out.scheme.flats)] += n
        assert got == expected

    def test_rel_rebinding_is_positional_in_declared_order(self):
        # Declared via a Sequence env: (z, u) as given — not sorted.
        tables = {"T": NestedRel.flat(Scheme.of("u", "z"), [(7, 1)])}
        # T's declared column order is (z, u): z=1 comes first, u=7 second...
        env = {"T": ("z", "u")}
        out = ref_eval(Rel("T", ("a", "b")), tables, env)
        t = out.items[0][0]
        # ...but tables hold sorted-attr tuples, so declared (z,u) maps z->a, u->b.
        assert t.as_dict() == {"a": 1, "b": 7}

    def test_scheme_env_binds_by_sorted_flats(self):
        tables = {"T": NestedRel.flat(Scheme.of("u", "z"), [(7, 1)])}
        out = ref_eval(Rel("T", ("a", "b")), tables)  # env from tables: Scheme
        t = out.items[0][0]
        # Scheme.flats is sorted: (u, z) -> (a, b).
        assert t.as_dict() == {"a": 7, "b": 1}


class TestBruteForce:
    def test_repeated_attribute_within_atom_is_a_filter(self):
        out = brute_force_join(
            [("R", ("x", "x"))], {"R": [(1, 1), (1, 2)]}
        )
        assert out == Counter({(1,): 1})

    def test_cyclic_triangle(self):
        rows = [(1, 2), (2, 3), (3, 1), (1, 1)]
        out = brute_force_join(
            [("R", ("x", "y")), ("S", ("y", "z")), ("T", ("z", "x"))],
            {"R": rows, "S": rows, "T": rows},
        )
        assert out[(1, 2, 3)] == 1 and out[(1, 1, 1)] == 1

    def test_bag_multiplicities_multiply(self):
        out = brute_force_join(
            [("R", ("x",)), ("S", ("x",))], {"R": [(1,), (1,)], "S": [(1,), (1,), (1,)]}
        )
        assert out == Counter({(1,): 6})

    def test_cap(self):
        big = [(i,) for i in range(200)]
        with pytest.raises(CapExceeded):
            brute_force_join(
                [("R", ("x",)), ("S", ("y",))], {"R": big, "S": big}, cap=1000
            )
