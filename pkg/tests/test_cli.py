import io
import json
import math
import subprocess
import sys

import pytest

from fsastab.cli import build_parser, parse_grid, parse_int_range, run

SUBCOMMANDS = ["xi", "drift", "region", "alpha-star", "chain", "transience", "simulate", "validate"]


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(autouse=True)
def no_output_dir(monkeypatch):
    monkeypatch.delenv("FSASTAB_OUTPUT_DIR", raising=False)


class TestExamples:
    def test_xi_spr(self):
        code, out, _ = call("xi", "--law", "spr", "--h", "3", "--L", "2")
        lines = out.splitlines()
        assert code == 0 and lines[0] == "k,probability"
        assert lines[1:3] == ["0,0.25", "1,0.75"]

    def test_xi_json_has_rationals(self):
        code, out, _ = call("xi", "--law", "mpr", "--M", "2", "--h", "3", "--L", "2", "--out", "json")
        doc = json.loads(out)
        assert code == 0 and [r["exact"] for r in doc["xi"]] == ["1/4", "0", "0", "3/4"]

    def test_alpha_star_spr(self):
        code, out, _ = call("alpha-star", "--law", "mpr", "--M", "1")
        row = out.splitlines()[1].split(",")
        assert code == 0 and float(row[1]) == pytest.approx(1.0, abs=1e-8)
        assert float(row[2]) == pytest.approx(math.exp(-1), abs=1e-10)

    def test_region_grid(self):
        code, out, _ = call("region", "--law", "mpr", "--M", "3", "--alpha-grid", "0.1:5:0.1")
        rows = [line.split(",") for line in out.splitlines()[1:]]
        assert code == 0 and len(rows) == 50
        one = [r for r in rows if float(r[0]) == 1.0][0]
        assert float(one[-1]) == pytest.approx(0.9197, abs=1e-4)

    def test_drift_json_reports_threshold(self):
        code, out, _ = call("drift", "--alpha", "1", "--lambda", "0.25", "--h-range", "1:200", "--out", "json")
        doc = json.loads(out)
        assert code == 0 and doc["sign_threshold"]["sign"] == -1
        assert doc["verdict"]["verdict"] == "Stable"

    def test_chain_rows(self):
        code, out, _ = call("chain", "--L", "2", "--lambda", "0", "--N-max", "2")
        assert code == 0 and "2,0,0.5" in out.splitlines()

    def test_chain_stationary(self):
        code, out, _ = call("chain", "--alpha", "1", "--lambda", "0.25", "--N-max", "60", "--stationary", "--out", "json")
        doc = json.loads(out)
        assert code == 0 and doc["converged"] is True and not doc["boundary_flag"]

    def test_transience(self):
        code, out, _ = call(
            "transience", "--alpha", "1", "--lambda", "0.45", "--N-max", "50", "--h-range", "20:25", "--out", "json"
        )
        doc = json.loads(out)
        assert code == 0 and doc["holds_from"] == 20 and doc["largest_tested"] == 25

    def test_simulate(self, tmp_path):
        trace = tmp_path / "trace.csv"
        code, out, _ = call(
            "simulate", "--alpha", "1", "--lambda", "0.25", "--frames", "100", "--runs", "2", "--trace", str(trace)
        )
        assert code == 0 and len(out.splitlines()) == 3
        assert trace.read_text().startswith("frame,backlog,L,arrivals,successes")

    def test_custom_arrivals(self, tmp_path):
        pmf = tmp_path / "pmf.csv"
        pmf.write_text("k,probability\n0,0.75\n1,0.25\n")
        code, out, _ = call("drift", "--L", "4", "--arrivals", f"custom:{pmf}", "--h-range", "0:0")
        assert code == 0 and out.splitlines()[1].split(",")[3] == "1"

    def test_validate(self):
        code, out, _ = call("validate")
        lines = out.splitlines()
        assert code == 0 and lines[0] == "check,result,detail"
        assert all(",PASS," in line for line in lines[1:]) and len(lines) > 5


class TestErrors:
    @pytest.mark.parametrize(
        "argv",
        [
            ["xi", "--h", "3", "--L", "2", "--alpha", "1"],
            ["xi", "--h", "3"],
            ["xi", "--law", "mpr", "--h", "3", "--L", "2"],
            ["region", "--alpha-grid", "1:0:0.1"],
            ["validate", "--check", "nonexistent"],
            ["simulate", "--alpha", "1", "--arrivals", "weird"],
            ["frobnicate"],
            [],
        ],
    )
    def test_usage_errors_exit_two(self, argv):
        code, out, err = call(*argv)
        assert code == 2 and out == ""
        assert err.startswith("fsastab: error[usage]:")

    def test_computation_error_exits_one(self):
        code, _, err = call("xi", "--h", "20", "--L", "10", "--method", "brute")
        assert code == 1 and err.startswith("fsastab: error[computation]: StateSpaceTooLarge")

    def test_missing_custom_file(self, tmp_path):
        code, _, err = call("drift", "--L", "2", "--arrivals", f"custom:{tmp_path / 'none.csv'}")
        assert code == 1 and "error[computation]" in err


class TestDeterminism:
    @pytest.mark.parametrize(
        "argv",
        [
            ["xi", "--law", "mpr", "--M", "3", "--h", "40", "--L", "30", "--out", "json"],
            ["drift", "--alpha", "1", "--lambda", "0.3", "--downward", "--h-range", "0:50"],
            ["simulate", "--alpha", "1", "--lambda", "0.3", "--frames", "500", "--runs", "3", "--out", "json"],
            ["chain", "--alpha", "1", "--lambda", "0.3", "--N-max", "30", "--out", "json"],
        ],
    )
    def test_byte_identical(self, argv):
        assert call(*argv) == call(*argv)

    def test_threads_do_not_change_output(self):
        base = ["simulate", "--alpha", "1", "--lambda", "0.3", "--frames", "300", "--runs", "4"]
        assert call(*base)[1] == call(*base, "--threads", "3")[1]


class TestOutputDestination:
    def test_output_file(self, tmp_path):
        dest = tmp_path / "sub" / "xi.csv"
        code, out, _ = call("xi", "--h", "3", "--L", "2", "--output", str(dest))
        assert code == 0 and out == "" and dest.read_text().startswith("k,probability")

    def test_environment_directory(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FSASTAB_OUTPUT_DIR", str(tmp_path))
        code, out, _ = call("alpha-star", "--M", "2", "--law", "mpr", "--out", "json")
        assert code == 0 and out == ""
        assert json.loads((tmp_path / "alpha-star.json").read_text())


class TestHelp:
    @pytest.mark.parametrize("sub", SUBCOMMANDS)
    def test_every_subcommand_documented(self, sub):
        parser = build_parser()
        action = [a for a in parser._actions if a.dest == "command"][0]
        sp = action.choices[sub]
        assert sp.description and len(sp.format_help()) > 200

    def test_help_exits_zero(self, capsys):
        assert run(["--help"]) == 0
        assert "alpha-star" in capsys.readouterr().out

    def test_console_entry_point(self):
        res = subprocess.run(
            [sys.executable, "-m", "fsastab", "xi", "--h", "2", "--L", "2"], capture_output=True, text=True, check=False
        )
        assert res.returncode == 0 and res.stdout.splitlines()[1:] == ["0,0.5", "1,0", "2,0.5"]


class TestParsers:
    def test_grid_inclusive(self):
        assert parse_grid("0.1:0.5:0.1").tolist() == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5])

    def test_grid_list(self):
        assert parse_grid("1,2.5").tolist() == [1.0, 2.5]

    def test_int_range(self):
        assert list(parse_int_range("2:8:3")) == [2, 5, 8]
