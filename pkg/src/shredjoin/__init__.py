"""Acyclic join evaluation over shredded nested relations.

Binary hash-join plans are rewritten into two-phase nested-semijoin
expressions and executed over a flat columnar encoding of nested relations;
instrumented counters expose the work done, making robustness comparisons
between execution strategies directly testable.
"""

from .columns import Column, PhysicalRelation
from .cost import CostFunctions, Counters, UNIT_LINEAR, counters_to_cost, static_cost_binary, static_cost_nsa
from .engine import Database, RunReport, explain, gen_diamond, load_db, run
from .errors import (
    AcyclicityError,
    AssumptionViolated,
    CapExceeded,
    ExprTypeError,
    NotWellBehaved,
    ParseError,
    SchemeError,
    ShredJoinError,
    StructuralError,
)
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
    Join,
    JoinQuery,
    JoinTree,
    Leaf,
    Plan,
    binary_to_nsa_naive,
    gyo,
    is_two_phase,
    is_well_behaved,
    parse_plan,
    parse_query,
    plan_to_tree,
    repair,
    to_2nsa,
    tree_to_plan,
)
from .schema import DictScheme, Predicate, Scheme, comparison, parse_scheme
from .shredded import ShreddedDictionary, ShreddedRelation, shred_flat, unshred, validate

__all__ = [
    "AcyclicityError",
    "AssumptionViolated",
    "Atom",
    "CapExceeded",
    "Column",
    "CostFunctions",
    "Counters",
    "Cyclic",
    "Database",
    "DictScheme",
    "Difference",
    "ExprTypeError",
    "Flatten",
    "GroupBy",
    "Join",
    "JoinQuery",
    "JoinTree",
    "Leaf",
    "NSemijoin",
    "NotWellBehaved",
    "NsaExpr",
    "ParseError",
    "PhysicalRelation",
    "Plan",
    "Predicate",
    "Project",
    "Rel",
    "Rename",
    "RunReport",
    "Scheme",
    "SchemeError",
    "Select",
    "ShredJoinError",
    "ShreddedDictionary",
    "ShreddedRelation",
    "StructuralError",
    "UNIT_LINEAR",
    "Union",
    "Unnest",
    "binary_to_nsa_naive",
    "comparison",
    "counters_to_cost",
    "explain",
    "format_expr",
    "gen_diamond",
    "gyo",
    "infer_scheme",
    "is_two_phase",
    "is_well_behaved",
    "load_db",
    "parse_plan",
    "parse_query",
    "parse_scheme",
    "plan_to_tree",
    "repair",
    "run",
    "shred_flat",
    "static_cost_binary",
    "static_cost_nsa",
    "to_2nsa",
    "tree_to_plan",
    "unshred",
    "validate",
]
