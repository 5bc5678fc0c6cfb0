"""Command-line front end.

Subcommands: ``load`` validates a database, ``run`` evaluates one query in
one mode, ``explain`` reports on a binary plan, ``gen`` writes a diamond
instance to disk, ``bench`` compares all four modes over a suite file.

Exit codes: 0 on success, 1 on user errors (bad files, malformed input,
cyclic queries, caps), 2 on internal invariant failures (with traceback).
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from collections import Counter
from pathlib import Path

from .engine import (
    MODES,
    Database,
    explain,
    gen_diamond,
    load_db,
    run,
    save_csv,
)
from .errors import (
    AcyclicityError,
    CapExceeded,
    ExprTypeError,
    NotWellBehaved,
    ParseError,
    SchemeError,
)
from .planner import JoinQuery, Plan, parse_plan, parse_query

#: Anything a user can cause from the command line; everything else is a bug.
USER_ERRORS = (
    ParseError,
    AcyclicityError,
    ExprTypeError,
    NotWellBehaved,
    CapExceeded,
    SchemeError,
    ValueError,
    OSError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message: str):
        raise _UsageError(f"{self.prog}: {message}")


def _read_arg(value: str, what: str) -> str:
    """The file's text when ``value`` names a file, else ``value`` itself.

    Lets ``--query``/``--plan`` take either a path or the literal text.
    """
    path = Path(value)
    try:
        if path.is_file():
            return path.read_text()
    except OSError:
        pass
    if what == "query" and ":-" not in value:
        raise ParseError(f"--query {value!r} is neither a file nor query text")
    if what == "plan" and "(" not in value:
        raise ParseError(f"--plan {value!r} is neither a file nor plan text")
    return value


def _load_query(value: str) -> JoinQuery:
    return parse_query(_read_arg(value, "query"))


def _load_plan(value: str) -> Plan:
    return parse_plan(_read_arg(value, "plan"))


def cmd_load(args: argparse.Namespace) -> int:
    db = load_db(args.schema, args.data)
    for name, rel in db.relations.items():
        cols = ", ".join(f"{n}:{rel.column(n).kind or '?'}" for n in rel.names)
        print(f"{name}({cols}): {len(rel)} rows")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    db = load_db(args.schema, args.data)
    query = _load_query(args.query)
    plan = _load_plan(args.plan) if args.plan else None
    if args.out and args.count_only:
        raise ValueError("--out needs materialized rows; drop --count-only")
    report = run(
        db,
        query=query,
        plan=plan,
        mode=args.mode,
        count_only=args.count_only,
        cap=args.cap,
    )
    totals = report.counters.totals
    print(f"mode:  {report.mode}")
    if report.plan_text:
        print(f"plan:  {report.plan_text}")
    print(f"rows:  {report.cardinality}")
    print(
        "work:  build={build} probe={probe} gen={gen} sum={sum}".format_map(totals)
    )
    print(f"time:  {report.duration_s:.4f}s")
    if args.out:
        save_csv(args.out, report.attrs, report.rows)
        print(f"wrote {args.out}")
    if args.stats:
        Path(args.stats).write_text(json.dumps(report.stats_dict(), indent=2) + "\n")
        print(f"wrote {args.stats}")
    return 0


def cmd_explain(args: argparse.Namespace) -> int:
    plan = _load_plan(args.plan)
    tables = None
    if args.schema and args.data:
        tables = load_db(args.schema, args.data).raw_tables()
    print(explain(plan, tables, cap=args.cap))
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    db = gen_diamond(args.diamond, args.variant)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    decls = []
    for name, rel in db.relations.items():
        save_csv(out / f"{name}.csv", rel.names, rel.rows())
        cols = ",".join(f"{n}:{rel.column(n).kind}" for n in rel.names)
        decls.append(f"{name}({cols})")
    (out / "schema.txt").write_text("\n".join(decls) + "\n")
    (out / "query.txt").write_text("Q() :- R(x,y), S(y,z), T(z,u).\n")
    sizes = ", ".join(f"|{n}|={len(r)}" for n, r in db.relations.items())
    print(f"wrote {args.variant} diamond (N={args.diamond}) to {out}: {sizes}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    suite_path = Path(args.suite)
    entries = json.loads(suite_path.read_text())
    if not isinstance(entries, list):
        raise ValueError(f"{args.suite}: expected a JSON list of entries")
    base = suite_path.parent

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    header = f"{'entry':<16} {'mode':<8} {'rows':>8} {'build':>10} {'probe':>10} {'gen':>12} {'sum':>12} {'time':>9}"
    print(header)
    print("-" * len(header))
    mismatches = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "schema" not in entry or "data" not in entry:
            raise ValueError(f"{args.suite}: entry {i} needs schema/data/query")
        name = entry.get("name", f"entry{i}")
        db = load_db(resolve(entry["schema"]), resolve(entry["data"]))

        def from_entry(value: str) -> str:
            cand = resolve(value)
            return str(cand) if cand.is_file() else value

        query = _load_query(from_entry(entry["query"]))
        plan = _load_plan(from_entry(entry["plan"])) if entry.get("plan") else None
        bags = {}
        for mode in MODES:
            report = run(db, query=query, plan=plan, mode=mode, cap=args.cap)
            bags[mode] = Counter(report.rows)
            t = report.counters.totals
            print(
                f"{name:<16} {mode:<8} {report.cardinality:>8} "
                f"{t['build']:>10} {t['probe']:>10} {t['gen']:>12} {t['sum']:>12} "
                f"{report.duration_s:>8.3f}s"
            )
        if len({frozenset(b.items()) for b in bags.values()}) != 1:
            mismatches.append(name)
    if mismatches:
        print(f"MODE DISAGREEMENT on: {', '.join(mismatches)}", file=sys.stderr)
        return 2
    print("all modes agree on every entry")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="shredjoin",
        description="Acyclic join evaluation over shredded relations, four ways.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="load and validate a database")
    p.add_argument("--schema", required=True, help="schema file, one T(z:int,u:int) per line")
    p.add_argument("--data", required=True, help="directory holding <relation>.csv files")
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("run", help="evaluate a query in one mode")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--query", required=True, help="query file or literal 'Q() :- ...' text")
    p.add_argument("--plan", help="binary plan file or literal '(R(x,y) * ...)' text")
    p.add_argument("--mode", choices=MODES, default="sya")
    p.add_argument("--out", help="write the result (sorted) as CSV")
    p.add_argument("--stats", help="write counters and timings as JSON")
    p.add_argument("--count-only", action="store_true", help="report cardinality only")
    p.add_argument("--cap", type=int, help="oracle-mode intermediate size cap")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("explain", help="analyze a binary plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--schema", help="with --data: cost against real cardinalities")
    p.add_argument("--data")
    p.add_argument("--cap", type=int, help="static-costing intermediate size cap")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("gen", help="write a diamond instance to a directory")
    p.add_argument("--diamond", type=int, required=True, metavar="N")
    p.add_argument("--variant", choices=("good", "bad"), required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="compare all modes over a JSON suite")
    p.add_argument("--suite", required=True, help="JSON list of {name, schema, data, query, plan?}")
    p.add_argument("--cap", type=int)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001 — anything else is an internal bug
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
