import subprocess
import sys

import pytest

from aces import convert_to_sfep, serialize_embedding, serialize_flat
from aces.cli import (
    EXIT_BACKEND_UNAVAILABLE,
    EXIT_MISMATCH,
    EXIT_MISSING_FILE,
    EXIT_NO_EMBEDDING,
    EXIT_OK,
    EXIT_PARSE_ERROR,
    EXIT_USAGE,
    EXIT_VIOLATIONS,
    main,
)
from aces.scenario import serialize_scenario
from helpers import corridor_plan


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve") / "corridor"
    assert main(["solve", "corridor", "--total-budget", "60", "--flat-budget", "10", "--max-cycle", "8", "--out", str(out)]) == 0
    return out


def test_exit_codes_are_distinct():
    codes = [EXIT_OK, EXIT_VIOLATIONS, EXIT_USAGE, EXIT_MISSING_FILE, EXIT_PARSE_ERROR,
             EXIT_BACKEND_UNAVAILABLE, EXIT_MISMATCH, EXIT_NO_EMBEDDING]
    assert len(set(codes)) == len(codes)


def test_solve_writes_artifacts(solved):
    emb = solved.with_suffix(".emb").read_text()
    assert emb.startswith("T=6 throughput=1/6 agents=1\n")
    assert solved.with_suffix(".flat").read_text().startswith("FLAT T=6 throughput=1/6")
    csv = solved.with_suffix(".csv").read_text().splitlines()
    assert csv[0] == "T,status,throughput,solve_seconds"
    assert [line.split(",")[0] for line in csv[1:]] == ["5", "6", "7", "8"]


def test_solve_from_path(tmp_path, corridor):
    path = tmp_path / "c.sfep"
    path.write_text(serialize_scenario(corridor))
    assert main(["solve", str(path), "--total-budget", "30", "--flat-budget", "5", "--max-cycle", "6",
                 "--backend", "bnb", "--out", str(tmp_path / "x")]) == 0
    assert (tmp_path / "x.emb").exists()


@pytest.mark.parametrize("suffix", [".emb", ".flat"])
def test_validate_solved(solved, suffix, capsys):
    assert main(["validate", "corridor", str(solved.with_suffix(suffix))]) == EXIT_OK
    assert "ok" in capsys.readouterr().out


def test_validate_two_tokens_in_one_cell(tmp_path, corridor, capsys):
    text = serialize_flat(corridor_plan(corridor), corridor)
    text = text.replace("[at]\n", "[at]\n1,0 1 null\n", 1)
    path = tmp_path / "bad.flat"
    path.write_text(text)
    assert main(["validate", "corridor", str(path)]) == EXIT_VIOLATIONS
    out = capsys.readouterr().out
    assert any(line.startswith("C9\t") for line in out.splitlines())


def test_validate_two_agents_in_one_cell(tmp_path, corridor, capsys):
    full = convert_to_sfep(corridor_plan(corridor), corridor)
    text = serialize_embedding(full)
    lines = text.splitlines()
    traj = next(line for line in lines if line.startswith("a0:"))
    text = text.replace("agents=1", "agents=2").replace(traj, traj + "\n" + traj.replace("a0:", "a1:"))
    text = text.replace("a0 -> a0", "a0 -> a0\na1 -> a1")
    path = tmp_path / "bad.emb"
    path.write_text(text)
    assert main(["validate", "corridor", str(path)]) == EXIT_VIOLATIONS
    assert "C9" in capsys.readouterr().out


def test_simulate(solved, tmp_path, capsys):
    out = tmp_path / "trace.tsv"
    assert main(["simulate", "corridor", str(solved.with_suffix(".emb")), "--cycles", "3", "--out", str(out)]) == 0
    assert "throughput=1/6" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 19 + 1


def test_simulate_accepts_flat(solved, capsys):
    assert main(["simulate", "corridor", str(solved.with_suffix(".flat")), "--cycles", "2"]) == 0
    assert "completions=2" in capsys.readouterr().out


def test_render(solved, capsys):
    assert main(["render", "corridor", str(solved.with_suffix(".emb"))]) == 0
    out = capsys.readouterr().out
    assert out.count("t=") == 7


def test_report(solved, tmp_path, capsys):
    other = tmp_path / "other.csv"
    other.write_text("T,status,throughput,solve_seconds\n6,optimal,1/3,0.5\n9,timeout_no_incumbent,,2.0\n")
    args = ["report", str(solved.with_suffix(".csv")), str(other)]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    lines = first.splitlines()
    assert lines[0] == "# throughput"
    assert lines[1] == "T\tcorridor\tother"
    assert "6\t1/6\t1/3" in lines
    assert "9\t\t0" in lines
    assert "# runtime_s" in lines
    assert "other\t6\t1/3" in lines


def test_missing_files(tmp_path):
    assert main(["solve", str(tmp_path / "nope.sfep")]) == EXIT_MISSING_FILE
    assert main(["validate", "corridor", str(tmp_path / "nope.emb")]) == EXIT_MISSING_FILE
    assert main(["report", str(tmp_path / "nope.csv")]) == EXIT_MISSING_FILE
    assert main(["solve", "no_such_bundled_scenario"]) == EXIT_MISSING_FILE


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.sfep"
    bad.write_text("[tokens]\n")
    assert main(["solve", str(bad)]) == EXIT_PARSE_ERROR
    emb = tmp_path / "bad.emb"
    emb.write_text("T=six\n")
    assert main(["validate", "corridor", str(emb)]) == EXIT_PARSE_ERROR
    csv = tmp_path / "bad.csv"
    csv.write_text("x,y\n")
    assert main(["report", str(csv)]) == EXIT_PARSE_ERROR


def test_backend_unavailable():
    assert main(["solve", "corridor", "--backend", "gurobi"]) == EXIT_BACKEND_UNAVAILABLE


def test_plan_from_other_scenario(solved):
    assert main(["validate", "toy_car", str(solved.with_suffix(".emb"))]) == EXIT_MISMATCH
    assert main(["validate", "toy_car", str(solved.with_suffix(".flat"))]) in (EXIT_MISMATCH, EXIT_PARSE_ERROR)


def test_no_embedding(tmp_path):
    code = main(["solve", "corridor", "--max-cycle", "5", "--flat-budget", "10", "--out", str(tmp_path / "z")])
    assert code == EXIT_NO_EMBEDDING
    assert (tmp_path / "z.csv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "corridor", "--total-budget", "0"],
        ["solve", "corridor", "--flat-budget", "-1"],
        ["solve", "corridor", "--min-cycle", "6", "--max-cycle", "5"],
        ["simulate", "corridor", "x.emb", "--cycles", "0"],
        ["frobnicate"],
    ],
)
def test_usage_errors(argv):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_USAGE


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "aces.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "solve" in proc.stdout and "report" in proc.stdout
