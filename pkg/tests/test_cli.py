import csv
import json
from pathlib import Path

import pytest

from trajent import cli, paycha
from trajent.errors import ConfigError
from trajent.scenario import bundled_scenarios, load_scenario, parse_matrix

SMALL = """
name = "small"
output_dir = "{out}"

[model]
dim = 2
H = [[[0.0, 0.0], [0.5, 0.0]], [[0.5, 0.0], [0.0, 0.0]]]
collapse_ops = [[[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]]
eta = 0.8

[initial_state]
rho = {rho}

[trajectory]
dt = 1e-3
t_final = 0.02
seed = 3
n_trajectories = 3
record_every = 4

[discrete]
tau = 0.05
n_steps = 3

[sigma]
variants = ["paper", "lambda"]
k_max = 30
"""
INTERIOR = "[[[0.6, 0.0], [0.05, 0.0]], [[0.05, 0.0], [0.4, 0.0]]]"
PURE = "[[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]"


def _scenario(tmp_path, rho=INTERIOR, name="s.toml", out="out"):
    path = tmp_path / name
    path.write_text(SMALL.format(out=(tmp_path / out).as_posix(), rho=rho))
    return path


def test_verify_all_passes(capsys):
    assert cli.main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "properties passed" in out


def test_verify_detects_perturbed_sigma_coefficient(monkeypatch, capsys):
    original = paycha.sigma_coefficient
    monkeypatch.setattr(paycha, "sigma_coefficient", lambda k1, k2: 1.01 * original(k1, k2))
    assert cli.main(["verify", "paycha"]) == 1
    assert "FAIL paycha" in capsys.readouterr().out


def test_verify_unknown_selector(capsys):
    assert cli.main(["verify", "everything"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_file_names_path(capsys):
    assert cli.main(["simulate", "/no/such/scenario.toml"]) == 2
    assert "/no/such/scenario.toml" in capsys.readouterr().err


def test_bad_usage_exits_2():
    assert cli.main(["simulate"]) == 2
    assert cli.main(["frobnicate", "x"]) == 2


def test_run_outputs_and_formats(tmp_path):
    path = _scenario(tmp_path)
    assert cli.main(["run", str(path)]) == 0
    out = tmp_path / "out"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["discrete_branches.csv", "discrete_summary.csv", "manifest.json",
                     "sigma_report.csv", "trajectories.csv"]
    with open(out / "trajectories.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == cli.TRAJECTORY_COLUMNS
    assert len(rows) == 1 + 3 * 5
    with open(out / "discrete_branches.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["record", "probability", "entropy"] and len(rows) == 1 + 8
    assert abs(sum(float(r[1]) for r in rows[1:]) - 1) < 1e-12
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and len(manifest["config_sha256"]) == 64
    assert set(manifest["versions"]) == {"trajent", "numpy", "python"}
    assert "y_n" in manifest["discrete"]["innovation_convention"]
    assert manifest["discrete"]["inequality2"].startswith("skipped")


def test_seventeen_significant_digits():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert float(cli.fmt(1 / 3)) == 1 / 3


def test_same_seed_gives_identical_files(tmp_path):
    path = _scenario(tmp_path)
    assert cli.main(["run", str(path), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", str(path), "--out", str(tmp_path / "b")]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_overrides(tmp_path):
    path = _scenario(tmp_path)
    assert cli.main(["simulate", str(path), "--seed", "9", "--dt", "5e-4",
                     "--out", str(tmp_path / "o")]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["seed"] == 9 and manifest["dt"] == 5e-4
    assert cli.main(["sigma", str(path), "--variant", "paper", "--out", str(tmp_path / "p")]) == 0
    with open(tmp_path / "p" / "sigma_report.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert [r[0] for r in rows[1:]] == ["paper"]
    assert cli.main(["simulate", str(path), "--dt", "0.5"]) == 2


def test_numerical_failure_exits_3_without_partial_files(tmp_path, capsys):
    path = _scenario(tmp_path, rho=PURE)
    assert cli.main(["run", str(path)]) == 3
    assert "NotFaithful" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_io_failure_exits_4(tmp_path):
    path = _scenario(tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["sigma", str(path), "--out", str(blocker / "sub")]) == 4


def test_config_errors_name_the_field(tmp_path):
    bad = SMALL.format(out="o", rho=INTERIOR).replace("[[[0.0, 0.0], [1.0, 0.0]]", "[[[0.0], [1.0, 0.0]]")
    path = tmp_path / "bad.toml"
    path.write_text(bad)
    with pytest.raises(ConfigError, match=r"model.collapse_ops\[0\]\[0\]\[0\]"):
        load_scenario(path)
    path.write_text(SMALL.format(out="o", rho=INTERIOR).replace("eta = 0.8", "eta = 1.8"))
    with pytest.raises(ConfigError, match="model"):
        load_scenario(path)
    path.write_text(SMALL.format(out="o", rho="[[[0.6, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.6, 0.0]]]"))
    with pytest.raises(ConfigError, match="initial_state.rho"):
        load_scenario(path)
    path.write_text("name = ")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_scenario(path)
    with pytest.raises(ConfigError, match="rows"):
        parse_matrix([[[1, 0]]], "x", 2)


def test_bundled_scenario_golden_run(tmp_path):
    assert bundled_scenarios() == ["qubit-sigmaz"]
    assert cli.main(["run", "qubit-sigmaz", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["trajectory"]["passing_variants"] == ["lambda"]
    assert manifest["sigma"]["paper"]["series"] == pytest.approx(-2.0, abs=1e-12)
    assert manifest["sigma"]["lambda"]["series"] == pytest.approx(-1.68, abs=1e-12)
    with open(tmp_path / "discrete_summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 7
    for r in rows[1:]:
        assert abs(float(r["delta_H_n"]) - (float(r["G_n"]) - float(r["L_n"]))) < 1e-10
        assert float(r["inequality1_slack"]) >= -1e-10 and float(r["inequality2_slack"]) >= -1e-10
