import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tempnmf.cli import main


def counts(tmp_path, seed=0, F=8, N=12):
    rng = np.random.default_rng(seed)
    V = rng.poisson(np.outer(rng.gamma(2, 2, F), rng.gamma(2, 2, N)))
    p = tmp_path / "v.csv"
    np.savetxt(p, V, fmt="%d", delimiter=",")
    return p


def test_simulate_rows(tmp_path):
    out = tmp_path / "h.csv"
    code = main(["simulate", "--chain", "rate", "--alpha", "2", "--beta", "2", "--n", "50",
                 "--replicas", "10", "--out", str(out)])
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 1 + 500


def test_simulate_zero_replicas_header_only(tmp_path):
    out = tmp_path / "h.csv"
    assert main(["simulate", "--chain", "bgar", "--alpha", "11", "--beta", "1", "--rho", "0.9",
                 "--replicas", "0", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1


def test_simulate_is_seeded(tmp_path, capsys):
    args = ["simulate", "--chain", "shape", "--alpha", "1", "--beta", "1", "--n", "5", "--seed", "4"]
    main(args)
    a = capsys.readouterr().out
    main(args)
    assert capsys.readouterr().out == a


def test_simulate_missing_hyperparameter(capsys):
    assert main(["simulate", "--chain", "rate", "--alpha", "2"]) == 2
    assert "--beta" in capsys.readouterr().err


def test_fit_writes_json(tmp_path):
    out = tmp_path / "fit.json"
    code = main(["fit", str(counts(tmp_path)), "--prior", "rate", "--alpha", "10", "--beta", "10",
                 "-K", "2", "--max-iters", "50", "--out", str(out)])
    assert code == 0
    d = json.loads(out.read_text())
    assert d["K"] == 2 and d["prior"]["family"] == "rate"


def test_fit_rejects_inadmissible_bgar(tmp_path, capsys):
    code = main(["fit", str(counts(tmp_path)), "--prior", "bgar", "--alpha", "10", "--beta", "1",
                 "--rho", "0.9", "--out", str(tmp_path / "f.json")])
    assert code == 2
    assert "alpha > 10" in capsys.readouterr().err


def test_fit_data_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,-4\n")
    assert main(["fit", str(bad)]) == 3
    assert main(["fit", str(tmp_path / "missing.csv")]) == 3


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"prior": "shape", "alpha": 2, "beta": 2, "K": 1, "max-iters": 5,
                               "out": str(tmp_path / "a.json")}))
    assert main(["fit", str(counts(tmp_path)), "--config", str(cfg), "--beta", "3"]) == 0
    d = json.loads((tmp_path / "a.json").read_text())
    assert d["prior"]["beta"] == 3 and d["iterations"] <= 5


def test_select_rank(tmp_path, capsys):
    assert main(["select-rank", str(counts(tmp_path)), "--grid", "1,2", "--trials", "3"]) == 0
    assert capsys.readouterr().out.strip() == "1"


def test_experiment(tmp_path):
    out = tmp_path / "res"
    code = main(["experiment", str(counts(tmp_path, N=15)), "--methods", "gap,bgar", "-K", "1",
                 "--splits", "1", "--inits", "1", "--max-iters", "30", "--out", str(out)])
    assert code == 0
    assert (out / "report.csv").read_text().count("\n") == 5


def test_unknown_method_is_usage_error(tmp_path, capsys):
    assert main(["experiment", str(counts(tmp_path)), "--methods", "gap,arima", "-K", "1"]) == 2
    assert "valid names" in capsys.readouterr().err


def test_experiment_needs_k(tmp_path):
    assert main(["experiment", str(counts(tmp_path))]) == 2


@pytest.mark.parametrize("argv", [[], ["nope"], ["fit", "--K", "x"]])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "tempnmf.cli", "simulate", "--chain", "rate",
                        "--alpha", "1", "--beta", "1", "--n", "2", "--replicas", "1"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and len(r.stdout.splitlines()) == 3
