import csv
import io
import json
import subprocess
import sys

import pytest

from qmallows import measures
from qmallows.cli import main
from qmallows.qseries import MallowsParams


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_eval_pmf_single(capsys):
    code, out, _ = run(["eval", "--op", "pmf_single", "--q", "0.5", "--alpha", "1", "--pairs", "0:0"], capsys)
    assert code == 0
    rec = json.loads(out)
    exact = measures.pmf_single(MallowsParams(0.5, 1.0), 0, 0)
    assert float(rec["prob"]) == exact.prob
    assert float(rec["log_prob"]) == float(exact)
    assert set(rec) >= {"op", "params", "log_prob", "prob", "tail_bound"}


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(["eval", "--op", "pmf_single", "--pairs", "0:0", "--bogus"], capsys)
    assert code == 2
    assert "usage" in err


def test_bad_pairs_and_params(capsys):
    assert run(["eval", "--op", "pmf_single", "--pairs", "0-0"], capsys)[0] == 2
    assert run(["eval", "--op", "pmf_single", "--pairs", "0:0", "--q", "1.5"], capsys)[0] == 2
    assert run(["eval", "--op", "pmf_decreasing", "--pairs", "0:0,1:2"], capsys)[0] == 2


def test_eval_csv(capsys):
    code, out, _ = run(["eval", "--op", "pmf_neighbors", "--pairs", "1:2,2:0", "--format", "csv"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    exact = measures.pmf_neighbors(MallowsParams(0.5, 1.0), 0, [2, 0])
    assert float(rows[0]["log_prob"]) == float(exact)


def test_out_path_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["sample", "--k", "4", "--n", "12000", "--seed", "3"]
    assert run(args + ["--out", str(a), "--threads", "1"], capsys)[0] == 0
    assert run(args + ["--out", str(b), "--threads", "4"], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert len(rep["windows"]) == 12000


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("QMALLOWS_SEED", "9")
    out1 = run(["sample", "--n", "3", "--k", "2", "--format", "csv"], capsys)[1]
    out2 = run(["sample", "--n", "3", "--k", "2", "--format", "csv", "--seed", "9"], capsys)[1]
    assert out1 == out2
    assert out1.splitlines()[0] == "replica,position,value"


def test_simulate_asep_modes(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    code, out, _ = run(["simulate-asep", "--L", "6", "--t", "2", "--replicas", "200", "--trace", str(trace)], capsys)
    assert code == 0
    assert json.loads(out)["target"] == "product measure"
    assert trace.read_text().splitlines()[0] == "time,left,right,kind"
    code, out, _ = run(["simulate-asep", "--mode", "second-class", "--L", "8", "--t", "20",
                        "--replicas", "100", "--format", "csv"], capsys)
    assert code == 0 and out.startswith("x,direction,jumps")
    code, out, _ = run(["simulate-asep", "--mode", "classes", "--L", "2", "--t", "1", "--replicas", "50",
                        "--thresholds=-1,1", "--format", "csv"], capsys)
    assert code == 0 and len(out.splitlines()) == 1 + 5 * 3


def test_simulate_asepqm(capsys):
    code, out, _ = run(["simulate-asepqm", "--M", "2", "--L", "6", "--t", "50", "--replicas", "50"], capsys)
    assert code == 0
    assert "tv" in json.loads(out)
    assert run(["simulate-asepqm", "--M", "0"], capsys)[0] == 2


def test_sixvertex_modes(tmp_path, capsys):
    code, out, _ = run(["sixvertex", "--mode", "exact", "--width", "4", "--height", "3", "--cuts", "0:-1"], capsys)
    assert code == 0
    law = json.loads(out)["law"]
    assert abs(sum(float(r["prob"]) for r in law) - 1) < 1e-12
    code, out, _ = run(["sixvertex", "--mode", "sample", "--width", "4", "--height", "3", "--cuts", "0:-1,1:0",
                        "--n", "5", "--format", "csv"], capsys)
    assert code == 0 and out.splitlines()[0] == 'replica,"h(0.5,-0.5)","h(1.5,0.5)"'
    support = tmp_path / "sd.json"
    support.write_text(json.dumps({"A": 1, "B": 5, "C": 5, "D": 9, "S": 2, "hats": [[1, 9], [5, 7]],
                                   "tildes": [[1, 9], [3, 5]], "g": {"1": 1, "2": 5, "5": 2, "6": 6}}))
    code, out, _ = run(["sixvertex", "--mode", "verify", "--support-file", str(support)], capsys)
    assert code == 0 and float(json.loads(out)["deviation"]) < 1e-12
    support.write_text(json.dumps({"A": 1, "B": 5, "C": 5, "D": 9, "S": 2, "hats": [[1, 9], [5, 7]],
                                   "tildes": [[1, 9], [3, 7]], "g": {"1": 1, "2": 5, "5": 2, "6": 6}}))
    assert run(["sixvertex", "--mode", "verify", "--support-file", str(support)], capsys)[0] == 1
    assert run(["sixvertex", "--mode", "exact", "--cuts", "0:0"], capsys)[0] == 2


def test_asymptotics(capsys):
    code, out, _ = run(["asymptotics", "--points", "3", "--format", "csv"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 3
    assert float(rows[1]["logistic"]) == 0.25


def test_internal_error_exit_code(tmp_path, capsys):
    missing = tmp_path / "none.json"
    assert run(["sixvertex", "--mode", "verify", "--support-file", str(missing)], capsys)[0] == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "qmallows", "eval", "--op", "pmf_single", "--pairs", "0:1"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["op"] == "pmf_single"
