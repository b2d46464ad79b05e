import csv
import io
import json

import pytest

from igacost.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# igacost ") and "schema v1" in lines[0]
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_solve_cpm1_ilu(capsys):
    code, out, _ = run(capsys, "solve", "--p", "2", "--continuity", "cpm1", "--h", "1/8", "--pc", "ilu")
    assert code == 0
    row = read_csv(out)[0]
    assert abs(int(row["iterations"]) - 12) <= 2
    assert row["pc"] == "ilu0" and row["space"] == "cpm1"


def test_solve_c0_jacobi_smallest(capsys):
    code, out, _ = run(capsys, "solve", "--p", "1", "--continuity", "c0", "--h", "1/2", "--pc", "jacobi",
                       "--format", "json")
    row = json.loads(out)
    # 8 unknowns after elimination; the reference table has 5
    assert code == 0 and abs(row["iterations"] - 5) <= 2


def test_solve_unpreconditioned_all_ones(capsys):
    code, out, _ = run(capsys, "solve", "--p", "2", "--continuity", "c0", "--h", "1/4", "--pc", "none",
                       "--format", "json")
    row = json.loads(out)
    assert code == 0 and row["converged"] and row["max_error"] < 1e-6


def test_solve_condensed(capsys):
    code, out, _ = run(capsys, "solve", "--p", "3", "--continuity", "c0", "--h", "1/4", "--pc", "ilu",
                       "--condense", "--format", "json")
    assert code == 0 and json.loads(out)["max_error"] < 1e-6


def test_solve_inode_ssor(capsys):
    base = ["solve", "--p", "3", "--continuity", "c0", "--h", "1/4", "--pc", "ssor", "--format", "json"]
    point = json.loads(run(capsys, *base)[1])
    code, out, _ = run(capsys, *base, "--ssor-blocks", "inode")
    inode = json.loads(out)
    assert code == 0 and inode["max_error"] < 1e-6
    assert inode["iterations"] < point["iterations"]


def test_usage_errors(capsys):
    assert run(capsys, "solve", "--pc", "jacobi", "--r", "1")[0] == 2
    assert run(capsys, "solve", "--p", "2", "--continuity", "cpm1", "--h", "1/5")[0] == 2
    assert run(capsys, "solve", "--continuity", "cpm1", "--condense")[0] == 2
    assert run(capsys, "nnz-report", "--p", "3", "--n", "10")[0] == 2
    with pytest.raises(SystemExit):
        main(["solve", "--pc", "amg"])


def test_dnc_exit_code(capsys):
    argv = ["solve", "--p", "2", "--continuity", "c0", "--h", "1/8", "--pc", "none", "--maxit", "3"]
    assert run(capsys, *argv)[0] == 1
    code, out, _ = run(capsys, *argv, "--allow-dnc")
    assert code == 0 and read_csv(out)[0]["iterations"] == "DNC"


def test_matrix_market_roundtrip(capsys, tmp_path):
    path = tmp_path / "a.mtx"
    code, out, _ = run(capsys, "solve", "--p", "2", "--h", "1/4", "--pc", "ilu", "--dump-matrix", str(path),
                       "--format", "json")
    assert code == 0 and path.exists()
    first = json.loads(out)
    code, out, _ = run(capsys, "solve", "--load-matrix", str(path), "--pc", "ilu", "--format", "json")
    assert code == 0 and json.loads(out)["iterations"] == first["iterations"]


def test_iterations_sweep(capsys):
    code, out, _ = run(capsys, "iterations", "--continuity", "cpm1", "--p", "2", "--h", "1/4",
                       "--pc", "jacobi,bbb", "--r", "0")
    rows = read_csv(out)
    assert code == 0 and len(rows) == 2
    assert list(rows[0].keys()) == ["space", "p", "h", "pc", "r", "iterations", "kappa", "setup_flops",
                                    "iterate_flops", "setup_s", "iterate_s"]
    assert rows[0]["iterations"] == rows[1]["iterations"]


def test_iterations_deterministic(capsys):
    argv = ["iterations", "--continuity", "c0", "--p", "1,2", "--h", "1/4", "--pc", "ssor,ilu", "--format", "json"]
    strip = lambda text: [{k: v for k, v in json.loads(l).items() if not k.endswith("_s")} for l in text.splitlines()]
    a = strip(run(capsys, *argv)[1])
    b = strip(run(capsys, *argv)[1])
    assert a == b and len(a) == 4


def test_kernels_bench(capsys):
    code, out, _ = run(capsys, "kernels-bench", "--p", "2", "--n", "12", "--reps", "5", "--format", "json")
    rows = [json.loads(l) for l in out.splitlines()]
    assert code == 0
    ratio = {r["kernel"]: r for r in rows if r["space"] == "ratio"}
    assert ratio["spmv"]["flops"] == pytest.approx(1000 / 512)


def test_kernels_bench_reproducible(capsys):
    argv = ["kernels-bench", "--p", "2", "--n", "12", "--reps", "5", "--format", "json"]
    def counts(text):
        return [{k: v for k, v in json.loads(l).items() if k != "seconds"} for l in text.splitlines()]

    assert counts(run(capsys, *argv)[1]) == counts(run(capsys, *argv)[1])


def test_kernels_bench_needs_five_reps(capsys):
    assert run(capsys, "kernels-bench", "--p", "2", "--n", "12", "--reps", "3")[0] == 2


def test_nnz_report(capsys):
    code, out, _ = run(capsys, "nnz-report", "--p", "2..5", "--format", "markdown")
    assert code == 0
    table = [[c.strip() for c in l.strip("|").split("|")] for l in out.splitlines() if l.startswith("| ")]
    col = table[0].index("ratio")
    # 729/216 = 3.375 exactly, printed as 3.37 in the reference table
    got = [float(r[col]) for r in table[1:]]
    assert got == pytest.approx([1.95, 2.74, 3.37, 3.88], abs=0.01)


def test_cost_table(capsys):
    code, out, _ = run(capsys, "cost-table", "--p", "3", "--N", "1e5")
    rows = {(r["pc"], r["space"]): r for r in read_csv(out)}
    assert code == 0
    assert rows["jacobi", "c0"]["setup_flops"] == "100000"
    assert rows["bbb", "cpm1"]["setup_formula"] == "2^10 N r^9"


def test_ilu_fit(capsys):
    code, out, _ = run(capsys, "ilu-fit", "--max-p", "3", "--format", "json")
    rows = [json.loads(l) for l in out.splitlines()]
    assert code == 0
    assert [r["value"] for r in rows if r["kind"] == "point"][0] == "351"
    assert sum(r["kind"] == "coefficient" for r in rows) == 3


def test_output_dir_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("IGACOST_OUTPUT_DIR", str(tmp_path / "out"))
    assert run(capsys, "cost-table", "--p", "2", "--output", "t.csv")[0] == 0
    assert (tmp_path / "out" / "t.csv").read_text().startswith("# igacost cost-table schema v1")
