"""Loading, the four execution modes end to end, explain, and the CLI."""

import dataclasses
import json
import random
import subprocess
from collections import Counter
from pathlib import Path

import pytest

import shredjoin.cli as cli
from gens import gen_acyclic_query, gen_db
from shredjoin.columns import PhysicalRelation
from shredjoin.engine import (
    Database,
    diamond_query,
    explain,
    gen_diamond,
    load_csv,
    load_db,
    load_schema,
    run,
    save_csv,
)
from shredjoin.errors import AcyclicityError, ParseError
from shredjoin.planner import format_plan, parse_plan, parse_query
from shredjoin.schema import Predicate, comparison

CHAIN_TEXT = "Q() :- R(x,y), S(y,z), T(z,u)."
RIGHT_DEEP_TEXT = "(R(x,y) * (S(y,z) * T(z,u)))"
LEFT_DEEP_TEXT = "((R(x,y) * S(y,z)) * T(z,u))"

# The bad diamond at N=3, joined: 2N tuples over sorted attrs (u, x, y, z).
BAD3_ROWS = [
    (1, 1, 1, 1),
    (2, 1, 1, 1),
    (3, 1, 1, 1),
    (4, 2, 4, 4),
    (4, 3, 4, 4),
    (4, 4, 4, 4),
]


class TestLoadSchema:
    def test_declarations_with_comments(self, tmp_path):
        p = tmp_path / "schema.txt"
        p.write_text(
            "# relations\n"
            "\n"
            "R(x:int, y:int)\n"
            "Names ( person : str , city : str )\n"
        )
        decls = load_schema(p)
        assert decls == {
            "R": (("x", "int"), ("y", "int")),
            "Names": (("person", "str"), ("city", "str")),
        }

    @pytest.mark.parametrize(
        "text, fragment, line",
        [
            ("R(x:int", "bad relation declaration", 1),
            ("R(x:int)\nR(y:int)", "declared twice", 2),
            ("R(x:int,:str)", "bad column declaration", 1),
            ("R(x:float)", "unknown kind 'float'", 1),
            ("R(x:int,x:str)", "repeats a column", 1),
            ("# nothing\n", "declares no relations", None),
        ],
    )
    def test_errors(self, tmp_path, text, fragment, line):
        p = tmp_path / "schema.txt"
        p.write_text(text)
        with pytest.raises(ParseError) as err:
            load_schema(p)
        assert fragment in str(err.value)
        assert err.value.line == line


class TestLoadCsv:
    DECL = (("x", "int"), ("y", "int"))

    def test_with_and_without_header(self, tmp_path):
        with_header = tmp_path / "a.csv"
        with_header.write_text("x,y\n1,2\n1,2\n3,4\n")
        headerless = tmp_path / "b.csv"
        headerless.write_text("1,2\n1,2\n3,4\n")
        for path in (with_header, headerless):
            rel = load_csv(path, self.DECL)
            assert rel.names == ("x", "y")
            # Bag semantics: the duplicate row is kept.
            assert rel.rows() == [(1, 2), (1, 2), (3, 4)]

    def test_string_columns_pass_through(self, tmp_path):
        p = tmp_path / "n.csv"
        p.write_text("person,city\nan a,berlin\n7,oslo\n")
        rel = load_csv(p, (("person", "str"), ("city", "str")))
        assert rel.rows() == [("an a", "berlin"), ("7", "oslo")]

    def test_wrong_value_count_reports_row(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("1,2\n1\n")
        with pytest.raises(ParseError) as err:
            load_csv(p, self.DECL)
        assert "expected 2 values, got 1" in str(err.value)
        assert err.value.line == 2

    def test_bad_int_reports_row_and_column(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("1,2\n3,four\n")
        with pytest.raises(ParseError) as err:
            load_csv(p, self.DECL)
        assert "'four' is not an int" in str(err.value)
        assert err.value.line == 2
        assert err.value.column == 2

    def test_empty_file_is_empty_relation(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("")
        assert load_csv(p, self.DECL).rows() == []


class TestLoadDbSaveCsv:
    def test_missing_data_file(self, tmp_path):
        (tmp_path / "schema.txt").write_text("R(x:int,y:int)\n")
        with pytest.raises(FileNotFoundError) as err:
            load_db(tmp_path / "schema.txt", tmp_path)
        assert "no data file for R" in str(err.value)

    def test_save_sorts_and_round_trips(self, tmp_path):
        p = tmp_path / "out.csv"
        save_csv(p, ("x", "y"), [(3, 4), (1, 2), (1, 1)])
        assert p.read_text() == "x,y\n1,1\n1,2\n3,4\n"
        rel = load_csv(p, (("x", "int"), ("y", "int")))
        assert rel.rows() == [(1, 1), (1, 2), (3, 4)]


class TestDiamond:
    def test_bad_instance_tables(self):
        db = gen_diamond(3, "bad")
        assert db.relations["R"].rows() == [(1, 1), (2, 4), (3, 4), (4, 4)]
        assert db.relations["S"].rows() == [
            (1, 1), (2, 1), (3, 1), (4, 2), (4, 3), (4, 4),
        ]
        assert db.relations["T"].rows() == [(1, 1), (1, 2), (1, 3), (4, 4)]

    @pytest.mark.parametrize("mode", ["binary", "sya", "ya-full", "oracle"])
    def test_bad_instance_result(self, mode):
        report = run(gen_diamond(3, "bad"), query=diamond_query(), mode=mode)
        assert report.attrs == ("u", "x", "y", "z")
        assert sorted(report.rows) == BAD3_ROWS
        assert report.cardinality == 6

    @pytest.mark.parametrize("mode", ["binary", "sya", "ya-full", "oracle"])
    def test_good_instance_result(self, mode):
        report = run(gen_diamond(1, "good"), query=diamond_query(), mode=mode)
        assert report.rows == [(1, 1, 1, 1)]

    @pytest.mark.parametrize("n", [1, 2, 5, 9])
    def test_output_sizes(self, n):
        q = diamond_query()
        bad = run(gen_diamond(n, "bad"), query=q, mode="oracle", count_only=True)
        good = run(gen_diamond(n, "good"), query=q, mode="oracle", count_only=True)
        assert bad.cardinality == 2 * n
        assert good.cardinality == n

    def test_bad_arguments(self):
        with pytest.raises(ValueError, match="n >= 1"):
            gen_diamond(0, "bad")
        with pytest.raises(ValueError, match="unknown variant"):
            gen_diamond(3, "middling")


def _mode_bags(db, query, plan=None):
    out = {}
    for mode in ("binary", "sya", "ya-full", "oracle"):
        report = run(db, query=query, plan=plan, mode=mode)
        out[mode] = Counter(report.rows)
    return out


class TestRun:
    def test_random_queries_all_modes_agree(self):
        rng = random.Random(401)
        for _ in range(25):
            q, _ = gen_acyclic_query(rng)
            db = gen_db(rng, q)
            bags = _mode_bags(db, q)
            assert bags["binary"] == bags["oracle"]
            assert bags["sya"] == bags["oracle"]
            assert bags["ya-full"] == bags["oracle"]

    def test_argument_validation(self, staged_db):
        q = parse_query(CHAIN_TEXT)
        with pytest.raises(ValueError, match="unknown mode"):
            run(staged_db, query=q, mode="quantum")
        with pytest.raises(ValueError, match="need a query"):
            run(staged_db)
        with pytest.raises(ValueError, match="do not match"):
            run(staged_db, query=q, plan=parse_plan("(R(x,y) * S(y,z))"))

    def test_cyclic_query_has_no_tree(self, staged_db):
        triangle = parse_query("Q() :- R(x,y), S(y,z), T(z,x).")
        with pytest.raises(AcyclicityError):
            run(staged_db, query=triangle, mode="sya")

    def test_count_only(self):
        db = gen_diamond(4, "bad")
        full = run(db, query=diamond_query(), mode="sya")
        counted = run(db, query=diamond_query(), mode="sya", count_only=True)
        assert counted.rows is None
        assert counted.cardinality == full.cardinality == 8

    def test_prefilters_apply_before_everything(self):
        db = gen_diamond(3, "good")
        pred = {"R": Predicate.of(comparison("x", "!=", 1))}
        for mode in ("binary", "sya", "ya-full", "oracle"):
            report = run(db, query=diamond_query(), mode=mode, prefilters=pred)
            assert sorted(report.rows) == [(2, 2, 2, 2), (3, 3, 3, 3)]

    def test_explicit_plan_is_followed(self):
        db = gen_diamond(3, "bad")
        report = run(
            db, query=diamond_query(), plan=parse_plan(LEFT_DEEP_TEXT), mode="binary"
        )
        assert report.plan_text == LEFT_DEEP_TEXT
        assert sorted(report.rows) == BAD3_ROWS

    def test_ill_behaved_plan_is_repaired_for_sya(self):
        db = gen_diamond(3, "bad")
        report = run(
            db, query=diamond_query(), plan=parse_plan(LEFT_DEEP_TEXT), mode="sya"
        )
        assert report.plan_text != LEFT_DEEP_TEXT
        assert sorted(report.rows) == BAD3_ROWS

    def test_stats_dict_is_json_ready(self, staged_db, right_deep_plan):
        q = parse_query(CHAIN_TEXT)
        report = run(staged_db, query=q, plan=right_deep_plan, mode="sya")
        stats = report.stats_dict()
        assert stats["mode"] == "sya"
        assert stats["plan"] == RIGHT_DEEP_TEXT
        assert stats["expr"].startswith("flatten(")
        assert stats["attrs"] == ["u", "x", "y", "z"]
        assert stats["rows"] == report.cardinality
        assert stats["cost_unit_linear"] == 29
        assert json.loads(json.dumps(stats)) == stats


class TestTwoPhaseFallbacks:
    """Queries whose machine-built two-phase form does not type."""

    @staticmethod
    def _siblings_db():
        return Database(
            {
                "R": PhysicalRelation.from_rows(
                    ("c1", "c2"), [(1, 1), (2, 5)], ("int", "int")
                ),
                "U": PhysicalRelation.from_rows(("c1",), [(1,), (1,)], ("int",)),
                "T": PhysicalRelation.from_rows(("c1",), [(1,)], ("int",)),
            }
        )

    @staticmethod
    def _triforce_db():
        kinds = ("int", "int")
        return Database(
            {
                "R": PhysicalRelation.from_rows(
                    ("c1", "c2", "c3"),
                    [(1, 1, 1), (1, 2, 2), (2, 2, 2)],
                    ("int", "int", "int"),
                ),
                "U": PhysicalRelation.from_rows(
                    ("c1", "c2"), [(1, 1), (1, 2), (9, 9)], kinds
                ),
                "T": PhysicalRelation.from_rows(("c1", "c2"), [(1, 1), (2, 2)], kinds),
                "V": PhysicalRelation.from_rows(
                    ("c1", "c2"), [(1, 1), (1, 2), (2, 2)], kinds
                ),
            }
        )

    def test_sibling_weight_holders_rechain_through_gyo(self):
        # U(b) and T(b) as siblings under R(a,b) would shred to two pure
        # weight holders; re-rooting as a chain keeps one per level.
        q = parse_query("Q() :- R(a,b), U(b), T(b).")
        plan = parse_plan("((R(a,b) * U(b)) * T(b))")
        db = self._siblings_db()
        report = run(db, query=q, plan=plan, mode="sya")
        assert report.plan_text == "(T(b) * (U(b) * R(a,b)))"
        assert report.expr_text.startswith("flatten(")
        # U holds (1,) twice, so the bag multiplicity doubles.
        assert report.rows == [(1, 1), (1, 1)]
        assert _mode_bags(db, q)["sya"] == _mode_bags(db, q)["oracle"]

    def test_inexpressible_query_degrades_to_full_reduction(self):
        # Every join tree for this query parks at least two of U, T, V as
        # children of R, all of them pure weight holders.
        q = parse_query("Q() :- R(a,b,c), U(a,b), T(b,c), V(a,c).")
        db = self._triforce_db()
        report = run(db, query=q, mode="sya")
        assert "no two-phase form" in report.expr_text
        assert sorted(report.rows) == [(1, 1, 1), (1, 2, 2)]
        bags = _mode_bags(db, q)
        assert bags["sya"] == bags["oracle"] == bags["binary"]


class TestExplain:
    def test_single_atom(self):
        text = explain(parse_plan("R(x,y)"))
        assert "well-behaved: yes" in text
        assert "binary=0 2nsa=0" in text

    def test_well_behaved_with_tables(self, staged_db, right_deep_plan):
        text = explain(right_deep_plan, staged_db.raw_tables())
        assert "well-behaved: yes" in text
        assert "2nsa expression:" in text
        assert "loaded tables" in text
        assert "binary=46 2nsa=29" in text

    def test_placeholder_tables(self, right_deep_plan):
        text = explain(right_deep_plan)
        assert "placeholder single-row tables" in text

    def test_ill_behaved_is_repaired(self, staged_db):
        text = explain(parse_plan(LEFT_DEEP_TEXT), staged_db.raw_tables())
        assert "well-behaved: no" in text
        assert "ja={z} not within la={x,y}" in text
        assert "repaired join tree" in text
        assert "executed plan:" in text

    def test_sibling_weight_holders_note(self):
        text = explain(parse_plan("((R(a,b) * U(b)) * T(b))"))
        assert "the sya mode uses the GYO tree's form:" in text
        assert "executed plan: (T(b) * (U(b) * R(a,b)))" in text
        assert "2nsa=" in text.splitlines()[-1]

    def test_inexpressible_note(self):
        plan = parse_plan("(V(a,c) * ((R(a,b,c) * U(a,b)) * T(b,c)))")
        text = explain(plan)
        assert "no two-phase form exists" in text
        assert "full reduction" in text
        assert "2nsa=" not in text.splitlines()[-1]


def _cli(capsys, *argv):
    rc = cli.main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


class TestCli:
    def test_gen_load_run_end_to_end(self, tmp_path, capsys):
        data = tmp_path / "bad4"
        rc, out, _ = _cli(
            capsys, "gen", "--diamond", "4", "--variant", "bad", "--out", str(data)
        )
        assert rc == 0
        assert "wrote bad diamond (N=4)" in out
        assert "|R|=5, |S|=8, |T|=5" in out

        rc, out, _ = _cli(
            capsys, "load", "--schema", str(data / "schema.txt"), "--data", str(data)
        )
        assert rc == 0
        assert "R(x:int, y:int): 5 rows" in out
        assert "S(y:int, z:int): 8 rows" in out

        out_csv = tmp_path / "result.csv"
        stats_json = tmp_path / "stats.json"
        rc, out, _ = _cli(
            capsys,
            "run",
            "--schema", str(data / "schema.txt"),
            "--data", str(data),
            "--query", str(data / "query.txt"),
            "--mode", "sya",
            "--out", str(out_csv),
            "--stats", str(stats_json),
        )
        assert rc == 0
        assert "mode:  sya" in out
        assert "rows:  8" in out
        assert "work:  build=" in out

        lines = out_csv.read_text().splitlines()
        assert lines[0] == "u,x,y,z"
        assert len(lines) == 9
        assert lines[1:] == sorted(lines[1:], key=lambda s: [int(v) for v in s.split(",")])

        stats = json.loads(stats_json.read_text())
        assert stats["mode"] == "sya"
        assert stats["rows"] == 8
        assert stats["attrs"] == ["u", "x", "y", "z"]
        assert stats["expr"].startswith("flatten(")
        assert isinstance(stats["counters"]["builds"], list)
        assert stats["cost_unit_linear"] == stats["counters"]["totals"]["sum"]

    def test_run_with_literal_query_and_plan(self, tmp_path, capsys):
        data = tmp_path / "bad3"
        _cli(capsys, "gen", "--diamond", "3", "--variant", "bad", "--out", str(data))
        rc, out, _ = _cli(
            capsys,
            "run",
            "--schema", str(data / "schema.txt"),
            "--data", str(data),
            "--query", CHAIN_TEXT,
            "--plan", RIGHT_DEEP_TEXT,
            "--mode", "binary",
            "--count-only",
        )
        assert rc == 0
        assert f"plan:  {RIGHT_DEEP_TEXT}" in out
        assert "rows:  6" in out

    def test_explain_command(self, tmp_path, capsys):
        data = tmp_path / "bad3"
        _cli(capsys, "gen", "--diamond", "3", "--variant", "bad", "--out", str(data))
        rc, out, _ = _cli(
            capsys,
            "explain",
            "--plan", LEFT_DEEP_TEXT,
            "--schema", str(data / "schema.txt"),
            "--data", str(data),
        )
        assert rc == 0
        assert "well-behaved: no" in out
        assert "loaded tables" in out

    def test_explain_cap_flag_clears_the_blow_up(self, tmp_path, capsys):
        # Static costing replays the binary plan's true intermediate sizes,
        # so on the bad instance it trips the default cap until raised.
        data = tmp_path / "bad100"
        _cli(capsys, "gen", "--diamond", "100", "--variant", "bad", "--out", str(data))
        argv = (
            "explain",
            "--plan", LEFT_DEEP_TEXT,
            "--schema", str(data / "schema.txt"),
            "--data", str(data),
        )
        rc, _, err = _cli(capsys, *argv)
        assert rc == 1
        assert "static costing grew to 10001 tuples (cap 10000)" in err
        rc, out, _ = _cli(capsys, *argv, "--cap", "20000")
        assert rc == 0
        assert "binary=41206 2nsa=1303" in out

    def test_bench_agreement(self, tmp_path, capsys):
        for n, variant in ((2, "good"), (3, "bad")):
            _cli(
                capsys, "gen", "--diamond", str(n), "--variant", variant,
                "--out", str(tmp_path / variant),
            )
        suite = [
            {
                "name": "good2",
                "schema": "good/schema.txt",
                "data": "good",
                "query": "good/query.txt",
            },
            {
                "name": "bad3",
                "schema": "bad/schema.txt",
                "data": "bad",
                "query": "bad/query.txt",
                "plan": LEFT_DEEP_TEXT,
            },
        ]
        suite_path = tmp_path / "suite.json"
        suite_path.write_text(json.dumps(suite))
        rc, out, _ = _cli(capsys, "bench", "--suite", str(suite_path))
        assert rc == 0
        assert "all modes agree on every entry" in out
        assert out.count("good2") == 4 and out.count("bad3") == 4

    def test_bench_reports_disagreement(self, tmp_path, capsys, monkeypatch):
        data = tmp_path / "good"
        _cli(capsys, "gen", "--diamond", "2", "--variant", "good", "--out", str(data))
        suite_path = tmp_path / "suite.json"
        suite_path.write_text(
            json.dumps(
                [{"name": "g", "schema": "good/schema.txt", "data": "good",
                  "query": "good/query.txt"}]
            )
        )
        true_run = cli.run

        def tampered(db, **kwargs):
            report = true_run(db, **kwargs)
            if kwargs.get("mode") == "oracle":
                report = dataclasses.replace(
                    report,
                    rows=report.rows + [report.rows[0]],
                    cardinality=report.cardinality + 1,
                )
            return report

        monkeypatch.setattr(cli, "run", tampered)
        rc, _, err = _cli(capsys, "bench", "--suite", str(suite_path))
        assert rc == 2
        assert "MODE DISAGREEMENT on: g" in err

    @pytest.mark.parametrize(
        "argv, fragment",
        [
            ((), "arguments are required"),
            (("run", "--schema", "s", "--data", "d", "--query", "q",
              "--mode", "quantum"), "invalid choice"),
        ],
    )
    def test_usage_errors_exit_1(self, capsys, argv, fragment):
        rc, _, err = _cli(capsys, *argv)
        assert rc == 1
        assert "shredjoin" in err
        assert fragment in err

    def test_user_errors_exit_1(self, tmp_path, capsys):
        # A missing schema file.
        rc, _, err = _cli(
            capsys, "load", "--schema", str(tmp_path / "nope.txt"),
            "--data", str(tmp_path),
        )
        assert rc == 1 and "error:" in err

        # Query text that is neither a file nor a rule.
        data = tmp_path / "good"
        _cli(capsys, "gen", "--diamond", "1", "--variant", "good", "--out", str(data))
        rc, _, err = _cli(
            capsys, "run", "--schema", str(data / "schema.txt"),
            "--data", str(data), "--query", "nonsense",
        )
        assert rc == 1 and "neither a file nor query text" in err

        # --out conflicts with --count-only.
        rc, _, err = _cli(
            capsys, "run", "--schema", str(data / "schema.txt"),
            "--data", str(data), "--query", str(data / "query.txt"),
            "--out", str(tmp_path / "o.csv"), "--count-only",
        )
        assert rc == 1 and "drop --count-only" in err

        # Bad generator size.
        rc, _, err = _cli(
            capsys, "gen", "--diamond", "0", "--variant", "bad",
            "--out", str(tmp_path / "z"),
        )
        assert rc == 1 and "n >= 1" in err

    def test_cyclic_query_exits_1_except_oracle(self, tmp_path, capsys):
        schema = tmp_path / "schema.txt"
        schema.write_text("R(x:int,y:int)\nS(y:int,z:int)\nT(z:int,x:int)\n")
        for name in ("R", "S", "T"):
            (tmp_path / f"{name}.csv").write_text("1,1\n")
        triangle = "Q() :- R(x,y), S(y,z), T(z,x)."
        rc, _, err = _cli(
            capsys, "run", "--schema", str(schema), "--data", str(tmp_path),
            "--query", triangle, "--mode", "sya",
        )
        assert rc == 1 and "cyclic" in err
        rc, out, _ = _cli(
            capsys, "run", "--schema", str(schema), "--data", str(tmp_path),
            "--query", triangle, "--mode", "oracle",
        )
        assert rc == 0 and "rows:  1" in out

    def test_internal_errors_exit_2(self, tmp_path, capsys, monkeypatch):
        def boom(*args, **kwargs):
            raise RuntimeError("wires crossed")

        monkeypatch.setattr(cli, "load_db", boom)
        rc, _, err = _cli(
            capsys, "load", "--schema", str(tmp_path / "s.txt"),
            "--data", str(tmp_path),
        )
        assert rc == 2
        assert "RuntimeError: wires crossed" in err

    def test_console_script(self, tmp_path):
        data = tmp_path / "good"
        gen = subprocess.run(
            ["shredjoin", "gen", "--diamond", "2", "--variant", "good",
             "--out", str(data)],
            capture_output=True, text=True,
        )
        assert gen.returncode == 0, gen.stderr
        ran = subprocess.run(
            ["shredjoin", "run", "--schema", str(data / "schema.txt"),
             "--data", str(data), "--query", str(data / "query.txt")],
            capture_output=True, text=True,
        )
        assert ran.returncode == 0, ran.stderr
        assert "rows:  2" in ran.stdout
