#!/usr/bin/env python3
"""Sweep the diamond instances and compare plan robustness across modes.

For each size N and variant, runs the fixed left-deep plan in binary mode
(which pairs R with S first and pays for the blow-up on the bad instance),
in sya mode (which repairs the plan and evaluates shredded), and in ya-full
mode (two reduction passes, then joins).  Prints one row per run with the
instrumented work counters and the work-to-data ratio sum/(in+out).
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

from shredjoin.engine import diamond_query, gen_diamond, run
from shredjoin.planner import parse_plan

LEFT_DEEP = "((R(x,y) * S(y,z)) * T(z,u))"


@dataclass(frozen=True)
class SweepConfig:
    sizes: tuple[int, ...] = (50, 100, 200, 400)
    variants: tuple[str, ...] = ("good", "bad")
    modes: tuple[str, ...] = ("binary", "sya", "ya-full")
    csv_out: Path | None = None


def sweep(config: SweepConfig) -> list[dict]:
    query = diamond_query()
    plan = parse_plan(LEFT_DEEP)
    records = []
    for n in config.sizes:
        for variant in config.variants:
            db = gen_diamond(n, variant)
            in_size = sum(db.cardinalities.values())
            for mode in config.modes:
                report = run(db, query=query, plan=plan, mode=mode, count_only=True)
                totals = report.counters.totals
                records.append(
                    {
                        "n": n,
                        "variant": variant,
                        "mode": mode,
                        "rows": report.cardinality,
                        "build": totals["build"],
                        "probe": totals["probe"],
                        "gen": totals["gen"],
                        "sum": totals["sum"],
                        "per_inout": totals["sum"] / (in_size + report.cardinality),
                        "seconds": report.duration_s,
                    }
                )
    return records


def print_table(records: list[dict]) -> None:
    header = (
        f"{'N':>5} {'variant':<8} {'mode':<8} {'rows':>7} {'build':>9} "
        f"{'probe':>9} {'gen':>11} {'sum':>11} {'sum/(in+out)':>13} {'time':>9}"
    )
    print(header)
    print("-" * len(header))
    last = None
    for r in records:
        if last not in (None, (r["n"], r["variant"])):
            print()
        last = (r["n"], r["variant"])
        print(
            f"{r['n']:>5} {r['variant']:<8} {r['mode']:<8} {r['rows']:>7} "
            f"{r['build']:>9} {r['probe']:>9} {r['gen']:>11} {r['sum']:>11} "
            f"{r['per_inout']:>13.2f} {r['seconds']:>8.3f}s"
        )
    bad = [r for r in records if r["variant"] == "bad"]
    worst = {m: max(r["per_inout"] for r in bad if r["mode"] == m)
             for m in {r["mode"] for r in bad}}
    print()
    print("worst work per input+output tuple on the bad instances:")
    for mode, ratio in sorted(worst.items(), key=lambda kv: kv[1]):
        print(f"  {mode:<8} {ratio:8.2f}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--sizes", type=int, nargs="+", default=list(SweepConfig.sizes),
        metavar="N", help="instance sizes to sweep",
    )
    parser.add_argument("--csv", type=Path, help="also write the records as CSV")
    args = parser.parse_args(argv)

    config = SweepConfig(sizes=tuple(args.sizes), csv_out=args.csv)
    records = sweep(config)
    print_table(records)
    if config.csv_out:
        with open(config.csv_out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(records[0]))
            writer.writeheader()
            writer.writerows(records)
        print(f"\nwrote {config.csv_out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
