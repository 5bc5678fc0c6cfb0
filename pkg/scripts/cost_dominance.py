#!/usr/bin/env python3
"""Measure how much the two-phase rewrite saves over random binary plans.

Draws random acyclic queries, a well-behaved binary plan for each, and a
random instance; costs the plan and its two-phase rewrite statically from
true cardinalities, then executes both and checks the counters reproduce the
static numbers exactly.  Reports the distribution of the cost ratio
two-phase/binary (never above 1 on well-behaved plans) and how often the
rewrite strictly wins.
"""

from __future__ import annotations

import argparse
import random
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path

# The shared seeded generators live with the tests.
sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from gens import gen_acyclic_query, gen_db, gen_well_behaved_plan  # noqa: E402

from shredjoin.cost import (  # noqa: E402
    Counters,
    counters_to_cost,
    static_cost_binary,
    static_cost_nsa,
)
from shredjoin.engine import execute_binary, execute_nsa  # noqa: E402
from shredjoin.errors import ExprTypeError  # noqa: E402
from shredjoin.exprs import infer_scheme  # noqa: E402
from shredjoin.planner import to_2nsa  # noqa: E402


@dataclass(frozen=True)
class CorpusConfig:
    plans: int = 200
    seed: int = 7
    max_rows: int = 30
    domain: int = 8


def measure(config: CorpusConfig) -> dict:
    rng = random.Random(config.seed)
    ratios: list[float] = []
    ties = wins = formless = disagreements = 0
    while len(ratios) < config.plans:
        query, tree = gen_acyclic_query(rng)
        plan = gen_well_behaved_plan(rng, query, tree)
        db = gen_db(rng, query, max_rows=config.max_rows, domain=config.domain)
        expr = to_2nsa(plan)
        env = {name: rel.names for name, rel in db.relations.items()}
        try:
            infer_scheme(expr, env)
        except ExprTypeError:
            formless += 1  # no two-phase form (colliding weight holders)
            continue
        tables = db.raw_tables()
        static_binary = static_cost_binary(plan, tables)
        static_nsa = static_cost_nsa(expr, tables)
        cb, cn = Counters(), Counters()
        execute_binary(plan, db, cb)
        execute_nsa(expr, db, cn)
        if counters_to_cost(cb) != static_binary or counters_to_cost(cn) != static_nsa:
            disagreements += 1
        if static_binary == 0:
            ties += 1  # single-atom plan: both free
            ratios.append(1.0)
            continue
        ratios.append(static_nsa / static_binary)
        if static_nsa < static_binary:
            wins += 1
        elif static_nsa == static_binary:
            ties += 1
    return {
        "plans": config.plans,
        "formless": formless,
        "disagreements": disagreements,
        "wins": wins,
        "ties": ties,
        "min": min(ratios),
        "median": statistics.median(ratios),
        "mean": statistics.fmean(ratios),
        "max": max(ratios),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--plans", type=int, default=CorpusConfig.plans)
    parser.add_argument("--seed", type=int, default=CorpusConfig.seed)
    args = parser.parse_args(argv)

    stats = measure(CorpusConfig(plans=args.plans, seed=args.seed))
    print(f"plans measured:           {stats['plans']}")
    print(f"no two-phase form, redrawn: {stats['formless']}")
    print(f"static/executed mismatches: {stats['disagreements']}")
    print(f"two-phase strictly cheaper: {stats['wins']}  (ties: {stats['ties']})")
    print(
        "cost ratio two-phase/binary: "
        f"min {stats['min']:.3f}  median {stats['median']:.3f}  "
        f"mean {stats['mean']:.3f}  max {stats['max']:.3f}"
    )
    if stats["max"] > 1.0 or stats["disagreements"]:
        print("DOMINANCE VIOLATED", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
