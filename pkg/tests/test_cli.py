import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from boxball import cli


def call(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    lines = text.splitlines()
    assert lines[0].startswith("# manifest: ")
    manifest = json.loads(lines[0][len("# manifest: "):])
    return manifest, list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_drude_example(capsys):
    code, out, _ = call(capsys, "drude", "--density", "0.2", "--capacity", "2")
    assert code == 0
    manifest, rows = table(out)
    assert manifest["command"] == "drude" and manifest["params"] == {"capacity": 2, "density": 0.2}
    drude = next(r for r in rows if r["quantity"] == "drude")
    assert float(drude["value"]) == pytest.approx(0.6383506, abs=6e-8)
    assert len(drude["value"].replace(".", "").lstrip("0")) == 17


def test_evolve_example(capsys):
    code, out, _ = call(capsys, "evolve", "--state", "00011100110", "--capacity", "3", "--steps", "1")
    assert code == 0
    _, rows = table(out)
    assert rows == [{"step": "1", "state": "11000011001", "loads": "2 1 0 0 1 2 3 2 1 2 3", "exit_load": "2"}]


def test_ldf_minimum(capsys):
    code, out, _ = call(capsys, "ldf", "--density", "0.3", "--capacity", "10", "--grid", "j=0.1:1.5:0.01")
    assert code == 0
    _, rows = table(out)
    j = np.array([float(r["j"]) for r in rows])
    G = np.array([float(r["G"]) for r in rows])
    lam = np.array([float(r["lambda_star"]) for r in rows])
    assert len(rows) == 141 and j[0] == 0.1 and j[-1] == 1.5
    assert j[np.argmin(G)] == 0.75
    k = np.flatnonzero(np.diff(np.sign(lam)))[0]
    zero = j[k] - lam[k] * (j[k + 1] - j[k]) / (lam[k + 1] - lam[k])
    assert zero == pytest.approx(0.7490144, abs=1e-5)


def test_validation_exit_code(capsys):
    code, _, err = call(capsys, "drude", "--density", "0.6", "--capacity", "2")
    assert code == 2 and "density" in err
    code, _, err = call(capsys, "measure-cumulants", "--density", "0.3", "--capacity", "3",
                        "--length", "100", "--time", "100", "--samples", "10")
    assert code == 2 and "wrap" in err
    code, _, _ = call(capsys, "drude", "--density", "0.2", "--fugacity", "0.2", "--capacity", "2")
    assert code == 2
    code, _, _ = call(capsys, "tba", "--density", "0.2", "--bogus")
    assert code == 2


def test_runtime_exit_code(capsys):
    # a short ring rarely holds every soliton size up to 5
    code, _, err = call(capsys, "measure-pseudoenergy", "--density", "0.1", "--length", "40",
                        "--samples", "64", "--truncation", "5")
    assert code == 3 and "ExcessExclusions" in err


def test_json_output(capsys):
    code, out, _ = call(capsys, "transfer-matrix", "--density", "0.2", "--capacity", "1,2", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["manifest"]["command"] == "transfer-matrix"
    assert [r["l"] for r in doc["rows"]] == [1, 2]
    assert doc["rows"][1]["f"] == pytest.approx(0.672498, abs=6e-7)


def test_output_file(tmp_path, capsys):
    target = tmp_path / "out.csv"
    assert cli.run(["tba", "--density", "0.4", "--capacity", "3", "--truncation", "3", "--out", str(target)]) == 0
    assert capsys.readouterr().out == ""
    _, rows = table(target.read_text())
    assert float(rows[0]["sigma"]) == pytest.approx(0.52)


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep point\ndensity = 0.2\ncapacity = 5\n")
    code, out, _ = call(capsys, "drude", "--config", str(cfg))
    assert code == 0
    assert float(table(out)[1][0]["value"]) == pytest.approx(1.744263, abs=6e-7)
    # explicit flags override the file
    code, out, _ = call(capsys, "drude", "--config", str(cfg), "--capacity", "2")
    assert float(table(out)[1][0]["value"]) == pytest.approx(0.6383506, abs=6e-8)
    code, _, _ = call(capsys, "drude", "--config", str(tmp_path / "missing.cfg"))
    assert code == 2


@pytest.mark.parametrize("argv", [
    ["energies", "--state", "1000110001110000000000"],
    ["correlations", "--density", "0.3", "--indices", "inf,inf,5,5"],
    ["flux-jacobian", "--density", "0.3", "--capacity", "3"],
    ["ldf2t", "--beta1", "0.4", "--beta-inf", "1.2", "--capacity", "inf", "--grid", "lambda=-0.2:0.2:0.1"],
    ["measure-cumulants", "--density", "0.3", "--capacity", "2", "--length", "300", "--time", "20",
     "--samples", "128", "--seed", "4"],
    ["measure-histogram", "--density", "0.3", "--capacity", "2", "--length", "300", "--time", "20",
     "--samples", "128", "--theory"],
    ["measure-correlation", "--density", "0.3", "--capacity", "3", "--dyn-capacity", "3",
     "--indices", "3,99,99", "--length", "300", "--time", "10", "--samples", "128"],
    ["measure-pseudoenergy", "--density", "0.3", "--length", "2000", "--samples", "64", "--truncation", "2"],
    ["sum-rule-check", "--density", "0.2", "--capacity", "3", "--length", "200", "--time", "5",
     "--samples", "128"],
])
def test_byte_identical_reruns(argv, capsys):
    code, first, _ = call(capsys, *argv)
    assert code == 0, first
    code, second, _ = call(capsys, *argv)
    assert first == second


def test_workers_do_not_change_output():
    base = [sys.executable, "-m", "boxball.cli", "measure-cumulants", "--density", "0.3", "--capacity", "2",
            "--length", "300", "--time", "20", "--samples", "256"]
    one = subprocess.run(base + ["--workers", "1"], capture_output=True, check=True).stdout
    two = subprocess.run(base + ["--workers", "2"], capture_output=True, check=True).stdout
    assert one == two


def test_help_mentions_units(capsys):
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["drude", "--help"])
    out = capsys.readouterr().out
    assert "per site" in out and "per step" in out
