import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from amgstokes import io
from amgstokes.cli import SCHEMA_FILE, main

TINY = Path(__file__).parent / "data" / "tiny"
TIMINGS = ("setup_seconds", "solve_seconds")
SCHEMA = json.loads(SCHEMA_FILE.read_text())


def run_cli(tmp_path, *argv):
    out = tmp_path / "report.json"
    code = main(["solve", *argv, "--json", str(out)])
    report = json.loads(out.read_text()) if out.exists() else None
    return code, report


def untimed(report):
    return {k: v for k, v in report.items() if k not in TIMINGS}


def test_golden_v1_report(tmp_path):
    code, rep = run_cli(tmp_path, "--matrix", str(TINY / "A.mtx"), "--rhs", str(TINY / "b.mtx"), "--solver", "v1")
    assert code == 0
    jsonschema.validate(rep, SCHEMA)
    golden = json.loads((TINY / "golden_v1.json").read_text())
    got = untimed(rep)
    assert got.keys() == golden.keys()
    relres = got.pop("relres")
    assert relres == pytest.approx(golden.pop("relres"), rel=1e-6)
    assert got == golden


def test_golden_values_are_consistent():
    golden = json.loads((TINY / "golden_v1.json").read_text())
    A = io.read_matrix(TINY / "A.mtx")
    assert golden["nnz"] == A.nnz and golden["dofs"] == A.nrows == 32
    # ptr, col and val at 8 bytes each
    assert golden["memory"]["matrix_bytes"] == 8 * (A.nrows + 1 + 2 * A.nnz)
    # IDR(5) keeps 2s + 4 vectors
    assert golden["memory"]["vectors_bytes"] == 14 * 32 * 8
    assert golden["converged"] and golden["relres"] <= 1e-6


def test_tiny_fixture_matches_generator(tmp_path):
    assert main(["dump", "--problem", "cube:2", "--out", str(tmp_path)]) == 0
    for name in ("A.mtx", "b.mtx", "pmask.mtx", "x_exact.mtx"):
        assert (tmp_path / name).read_bytes() == (TINY / name).read_bytes()


def test_dump_counts(tmp_path):
    main(["dump", "--problem", "cube:3", "--out", str(tmp_path)])
    A = io.read_matrix(tmp_path / "A.mtx")
    pm = io.read_vector(tmp_path / "pmask.mtx")
    assert A.nrows == 4 * 27 and pm.sum() == 27 and np.all(pm[-27:] == 1)
    assert io.read_matrix(TINY / "A.mtx").nrows == 32
    assert io.read_vector(TINY / "pmask.mtx").sum() == 8


@pytest.mark.parametrize("solver", ["v1", "v2", "v4"])
def test_dump_then_run_matches_generated_run(tmp_path, solver):
    main(["dump", "--problem", "cube:4", "--out", str(tmp_path)])
    files = ["--matrix", str(tmp_path / "A.mtx"), "--rhs", str(tmp_path / "b.mtx"),
             "--pmask", str(tmp_path / "pmask.mtx"), "--exact", str(tmp_path / "x_exact.mtx")]
    c1, from_files = run_cli(tmp_path, *files, "--solver", solver)
    c2, generated = run_cli(tmp_path, "--problem", "cube:4", "--solver", solver)
    assert c1 == c2 == 0
    assert untimed(from_files) == untimed(generated)


def test_generated_run_reports_errors(tmp_path):
    code, rep = run_cli(tmp_path, "--problem", "cube:6", "--solver", "v2")
    assert code == 0 and rep["converged"] and rep["relres"] <= 1e-6
    jsonschema.validate(rep, SCHEMA)
    assert set(rep["errors"]) == {"velocity", "pressure"} and rep["errors"]["velocity"] < 0.2


def test_report_is_deterministic(tmp_path):
    _, a = run_cli(tmp_path, "--problem", "cube:4", "--solver", "v3")
    _, b = run_cli(tmp_path, "--problem", "cube:4", "--solver", "v3")
    assert untimed(a) == untimed(b)


def test_not_converged_exit_code(tmp_path):
    code, rep = run_cli(tmp_path, "--problem", "cube:4", "--solver", "v1", "--maxiter", "2", "--tol", "1e-12")
    assert code == 2 and rep["converged"] is False
    jsonschema.validate(rep, SCHEMA)


def test_overrides(tmp_path):
    code, rep = run_cli(tmp_path, "--problem", "cube:4", "--solver", "custom", "--schur-variant", "full",
                        "--block-size", "3", "--precision", "single", "--seed", "7")
    assert code == 0 and rep["solver_id"] == "custom"


@pytest.mark.parametrize("argv", [
    ["solve", "--problem", "sphere:4"],
    ["solve", "--solver", "v9", "--problem", "cube:2"],
    ["solve", "--block-size", "2", "--problem", "cube:2"],
    ["frobnicate"],
    [],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["--matrix", str(TINY / "A.mtx")],
    ["--problem", "cube:2", "--matrix", str(TINY / "A.mtx")],
    ["--matrix", str(TINY / "A.mtx"), "--rhs", str(TINY / "b.mtx"), "--solver", "v2"],
    ["--matrix", str(TINY / "missing.mtx"), "--rhs", str(TINY / "b.mtx")],
    ["--matrix", str(Path(__file__).parent / "data" / "mtx_bad" / "bad_number.mtx"), "--rhs", str(TINY / "b.mtx")],
    ["--problem", "cube:1"],
])
def test_runtime_errors(tmp_path, argv, capsys):
    code, rep = run_cli(tmp_path, *argv)
    assert code == 1 and rep is None
    assert "error" in capsys.readouterr().err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "amgstokes.cli", "solve", "--problem", "cube:2", "--solver", "v1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    rep = json.loads(proc.stdout)
    jsonschema.validate(rep, SCHEMA)
    assert rep["dofs"] == 32
