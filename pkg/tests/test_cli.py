import csv
import hashlib
import json

import pytest

from filmlimit import cli


def run(tmp_path, name, *args, config=None):
    out = tmp_path / name
    argv = list(args) + ["--out", str(out)]
    if config is not None:
        cp = tmp_path / f"{name}.json"
        cp.write_text(json.dumps(config))
        argv += ["--config", str(cp)]
    return cli.run(argv), out


def test_identity(tmp_path, capsys):
    code, out = run(tmp_path, "id", "identity", "--samples", "2000")
    assert code == 0
    res = json.loads((out / "identity.json").read_text())
    assert res["max_scaled_residual"] <= 1e-12
    assert "max residual" in capsys.readouterr().out


def test_micro(tmp_path, capsys):
    code, out = run(tmp_path, "micro", "micro", "--N", "2")
    assert code == 0
    res = json.loads((out / "micro.json").read_text())
    assert res["q"] <= 0.95
    assert res["lhs_quadrature"] < res["rhs"]
    assert capsys.readouterr().out.startswith("q=")


def test_recover_constant(tmp_path):
    code, out = run(tmp_path, "rec", "recover", "--case", "constant", "--eps", "0.01,0.005")
    assert code == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert all(abs(float(r["gap"])) <= 1e-12 for r in rows)


def test_recover_deterministic(tmp_path):
    _, a = run(tmp_path, "a", "recover", "--case", "smooth", "--eps", "0.01,0.005")
    _, b = run(tmp_path, "b", "recover", "--case", "smooth", "--eps", "0.01,0.005", "--workers", "2")
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()


def test_manifest_hashes(tmp_path):
    code, out = run(tmp_path, "m", "eval2d", "--case", "delaminated")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["files"]) == {"eval2d.json", "delamination.pgm"}
    for name, digest in man["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert len(man["config_sha256"]) == 64 and man["seed"] == 0


def test_force_collision(tmp_path):
    assert run(tmp_path, "c", "identity", "--samples", "10")[0] == 0
    assert run(tmp_path, "c", "identity", "--samples", "10")[0] == cli.EXIT_VALIDATION
    assert run(tmp_path, "c", "identity", "--samples", "10", "--force")[0] == 0


def test_solve1d(tmp_path):
    cfg = {"material": {"mu_b": 2.0, "kappa_b": 1.0, "kappa_f": 10.0},
           "solver": {"n": 20, "n_u": 11, "U": 2.0, "bc": [2.0, 2.0]}}
    code, out = run(tmp_path, "s", "solve1d", config=cfg)
    assert code == 0
    res = json.loads((out / "solve1d.json").read_text())
    assert res["energy"] == pytest.approx(1.0)


def test_membrane_constant(tmp_path):
    cfg = {"solver": {"nx": 4, "ny": 4, "load": ["0.5", "0"], "tol": 1e-12}}
    code, out = run(tmp_path, "mem", "membrane", config=cfg)
    assert code == 0
    with open(out / "membrane.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(abs(float(r["u1"]) - 0.5) < 1e-10 for r in rows)


@pytest.mark.parametrize("argv", [["micro", "--N", "x"], ["nosuch"], ["recover", "--case", "spiral"]])
def test_bad_arguments(tmp_path, argv):
    assert run(tmp_path, "bad", *argv)[0] == cli.EXIT_VALIDATION


def test_bad_config(tmp_path):
    assert run(tmp_path, "bc", "identity", config={"material": {"mu_f": -1}})[0] == cli.EXIT_VALIDATION
    assert run(tmp_path, "bl", "identity", config=[1, 2])[0] == cli.EXIT_VALIDATION


def test_numerical_failure(tmp_path):
    cfg = {"solver": {"nx": 16, "ny": 16, "load": ["x1*x2", "sin(x1)"], "tol": 1e-14, "maxiter": 1}}
    assert run(tmp_path, "nf", "membrane", config=cfg)[0] == cli.EXIT_NUMERICAL
