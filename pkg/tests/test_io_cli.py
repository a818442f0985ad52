import json

import numpy as np
import pytest

from slim import io
from slim.cli import main
from slim.synth import GeneratorConfig, gen_dataset


@pytest.fixture
def dataset(tmp_path):
    d = tmp_path / "d"
    assert main(["gen", "--p", "20", "--s", "3", "--n", "200", "--seed", "7", "--out", str(d)]) == 0
    return d


def test_gen_contract(dataset):
    X, header = io.read_matrix(dataset / "X.csv")
    assert X.shape == (200, 20) and header == [f"c{j}" for j in range(20)]
    assert (dataset / "y.csv").read_text().splitlines()[0] == "y"
    truth = json.loads((dataset / "truth.json").read_text())
    assert truth["seed"] == 7 and len(truth["theta_tilde"]) == 20 and "Sigma_tilde" in truth
    ref_X, ref_y, _ = gen_dataset(GeneratorConfig(n=200, p=20, s=3, rng_seed=7))
    assert np.array_equal(X, ref_X) and np.array_equal(io.read_vector(dataset / "y.csv"), ref_y)


def test_truth_omits_sigma_for_large_p(tmp_path):
    assert main(["gen", "--p", "201", "--s", "2", "--n", "5", "--out", str(tmp_path)]) == 0
    assert "Sigma_tilde" not in json.loads((tmp_path / "truth.json").read_text())


def test_fit_predict_round_trip(dataset, tmp_path, capsys):
    model = tmp_path / "model.json"
    args = ["fit", "--x", str(dataset / "X.csv"), "--y", str(dataset / "y.csv"), "--gamma", "0.1"]
    assert main(args + ["--out", str(model)]) == 0
    doc = json.loads(model.read_text())
    assert isinstance(doc["support"], list) and doc["support"]
    capsys.readouterr()
    assert main(["predict", "--model", str(model), "--x", str(dataset / "X.csv")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "y_hat" and len(lines) == 201
    out = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model), "--x", str(dataset / "X.csv"), "--out", str(out)]) == 0
    assert np.array_equal(io.read_vector(out), np.array([float(v) for v in lines[1:]]))


def test_fit_tunes_gamma(dataset, tmp_path, capsys):
    args = ["fit", "--x", str(dataset / "X.csv"), "--y", str(dataset / "y.csv"), "--gamma-count", "3"]
    assert main(args + ["--out", str(tmp_path / "m.json")]) == 0
    assert "gamma" in capsys.readouterr().out


def test_strict_nonconvergence_exit_3(dataset, tmp_path):
    args = ["fit", "--x", str(dataset / "X.csv"), "--y", str(dataset / "y.csv"), "--gamma", "0.01"]
    assert main(args + ["--max-iterations", "1", "--out", str(tmp_path / "m0.json")]) == 0
    assert main(args + ["--max-iterations", "1", "--strict", "--out", str(tmp_path / "m.json")]) == 3


@pytest.mark.parametrize(
    "argv",
    [[], ["bogus"], ["gen", "--n", "5", "--bad-flag", "--out", "x"], ["gen", "--n", "0", "--out", "x"],
     ["gen", "--n", "5", "--p", "2", "--s", "3", "--out", "x"], ["experiment", "--n-grid", "a,b"]],
)
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path, capsys):
    assert main(["fit", "--x", str(tmp_path / "no.csv"), "--y", str(tmp_path / "no.csv"), "--out", "m"]) == 2
    assert "not found" in capsys.readouterr().err


def test_malformed_csv_names_line_and_column(tmp_path, capsys):
    (tmp_path / "X.csv").write_text("c0,c1\n1,2\nx,3\n")
    (tmp_path / "y.csv").write_text("y\n1\n2\n")
    assert main(["fit", "--x", str(tmp_path / "X.csv"), "--y", str(tmp_path / "y.csv"), "--out", "m"]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "column 0" in err


def test_ragged_and_mismatched_rows(tmp_path):
    (tmp_path / "r.csv").write_text("c0,c1\n1,2\n3\n")
    with pytest.raises(io.DataError, match="line 3"):
        io.read_matrix(tmp_path / "r.csv")
    (tmp_path / "X.csv").write_text("c0\n1\n2\n3\n")
    (tmp_path / "y.csv").write_text("y\n1\n2\n")
    assert main(["fit", "--x", str(tmp_path / "X.csv"), "--y", str(tmp_path / "y.csv"), "--out", "m"]) == 2


def test_predict_column_mismatch(dataset, tmp_path):
    model = tmp_path / "m.json"
    main(["fit", "--x", str(dataset / "X.csv"), "--y", str(dataset / "y.csv"), "--gamma", "0.1", "--out", str(model)])
    (tmp_path / "Z.csv").write_text("c0\n1\n")
    assert main(["predict", "--model", str(model), "--x", str(tmp_path / "Z.csv")]) == 2


def test_csv_round_trip(tmp_path):
    X = np.random.default_rng(0).standard_normal((4, 3))
    io.write_matrix(tmp_path / "X.csv", X)
    back, header = io.read_matrix(tmp_path / "X.csv")
    assert np.array_equal(back, X) and header == ["c0", "c1", "c2"]
    assert b"\r" not in (tmp_path / "X.csv").read_bytes()


def test_experiment_cli_and_env_workers(tmp_path, monkeypatch):
    monkeypatch.setenv("SLIM_WORKERS", "1")
    out = tmp_path / "e"
    argv = ["experiment", "--n-grid", "100", "--trials", "1", "--p", "20", "--s", "3", "--gamma-count", "3",
            "--no-runtime", "--out", str(out)]
    assert main(argv) == 0
    assert len((out / "metrics.csv").read_text().splitlines()) == 4
    assert json.loads((out / "experiment.json").read_text())["workers"] == 1
    monkeypatch.setenv("SLIM_WORKERS", "0")
    assert main(argv) == 1


def test_check_command(capsys):
    assert main(["check"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3 and all(line.startswith("PASS") for line in lines)
