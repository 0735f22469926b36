from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from sparse_stealth import SWEEP_K_HEADER, __version__
from sparse_stealth.cli import cli_main


@pytest.fixture
def model_path(tmp_path: Path) -> Path:
    assert cli_main(["build", "--case", "ieee9", "--snr-db", "30", "--output-dir", str(tmp_path)]) == 0
    return tmp_path / "model.json"


@pytest.fixture
def attack_path(tmp_path: Path, model_path: Path) -> Path:
    out = tmp_path / "attack"
    assert cli_main(["attack", "--model", str(model_path), "--k", "3", "--lambda", "4", "--output-dir", str(out)]) == 0
    return out / "attack.json"


def _rows(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_build(model_path: Path):
    payload = json.loads(model_path.read_text())
    assert payload["name"] == "ieee9"
    assert (payload["m"], payload["n"]) == (18, 8)
    assert payload["snr_db"] == 30.0


def test_attack(attack_path: Path):
    plan = json.loads(attack_path.read_text())
    assert plan["k"] == 3
    assert plan["lambda"] == 4.0
    assert len(plan["support"]) == 3
    assert len(plan["sigma_aa"]) == 18 * 19 // 2
    trace = _rows(attack_path.parent / "trace.csv")
    assert [row["epoch"] for row in trace] == ["1", "2", "3"]
    assert [int(row["selected_index"]) for row in trace] == plan["support"]
    assert all(row["shortfall_flag"] == "0" for row in trace)


def test_attack_correlated(tmp_path: Path, model_path: Path):
    out = tmp_path / "corr"
    code = cli_main([
        "attack", "--model", str(model_path), "--k", "2", "--algorithm", "correlated",
        "--method", "gradient", "--output-dir", str(out),
    ])
    assert code == 0
    trace = _rows(out / "trace.csv")
    assert list(trace[0]) == ["epoch", "selected_index", "s_norm", "J_after", "solver_iters", "warning_flag"]


def test_metrics(attack_path: Path, model_path: Path, capsys: pytest.CaptureFixture[str]):
    capsys.readouterr()
    assert cli_main(["metrics", "--model", str(model_path), "--attack", str(attack_path)]) == 0
    record = json.loads(capsys.readouterr().out)
    assert set(record) >= {"J", "mi", "kl"}
    assert record["kl"] > 0.0


def test_detect(tmp_path: Path, attack_path: Path, model_path: Path):
    out = tmp_path / "det"
    code = cli_main([
        "detect", "--model", str(model_path), "--attack", str(attack_path),
        "--tau", "2", "--n-samples", "2000", "--seed", "4", "--output-dir", str(out),
    ])
    assert code == 0
    (row,) = _rows(out / "detection.csv")
    assert row["k"] == "3"
    assert row["n_samples"] == "2000"
    assert 0.0 <= float(row["detect_prob"]) <= 1.0


def test_roc(tmp_path: Path, attack_path: Path, model_path: Path):
    out = tmp_path / "roc"
    code = cli_main([
        "roc", "--model", str(model_path), "--attack", str(attack_path),
        "--tau", "0.5", "2", "8", "--n-samples", "2000", "--output-dir", str(out),
    ])
    assert code == 0
    rows = _rows(out / "roc.csv")
    assert [float(row["tau"]) for row in rows] == [0.5, 2.0, 8.0]
    fa = [float(row["false_alarm"]) for row in rows]
    assert fa == sorted(fa, reverse=True)


@pytest.mark.parametrize("concurrent", [False, True])
def test_sweep_k(tmp_path: Path, concurrent: bool):
    argv = ["sweep-k", "--case", "ieee9", "--lambda", "8", "--k", "2", "18", "--output-dir", str(tmp_path)]
    if concurrent:
        argv.append("--concurrent")
    assert cli_main(argv) == 0
    with open(tmp_path / "sweep_k.csv", newline="") as f:
        reader = csv.reader(f)
        assert tuple(next(reader)) == SWEEP_K_HEADER
        rows = list(reader)
    assert [row[SWEEP_K_HEADER.index("k")] for row in rows] == ["2", "18"]


def test_sweep_lambda(tmp_path: Path):
    code = cli_main([
        "sweep-lambda", "--case", "ieee9", "--lambda", "1", "8", "--k-fraction", "0.2",
        "--n-samples", "1000", "--output-dir", str(tmp_path),
    ])
    assert code == 0
    rows = _rows(tmp_path / "sweep_lambda.csv")
    assert [row["lambda"] for row in rows] == ["1.0", "8.0"]
    assert {row["k"] for row in rows} == {"4"}
    assert {row["tau"] for row in rows} == {"2.0"}


def test_unknown_flag(capsys: pytest.CaptureFixture[str]):
    assert cli_main(["build", "--frobnicate"]) == 1
    assert "unrecognized arguments" in capsys.readouterr().err


def test_missing_subcommand():
    assert cli_main([]) == 1


def test_small_lambda(tmp_path: Path, model_path: Path, capsys: pytest.CaptureFixture[str]):
    code = cli_main(["attack", "--model", str(model_path), "--k", "2", "--lambda", "0.5", "--output-dir", str(tmp_path)])
    assert code == 1
    assert "lambda" in capsys.readouterr().err


def test_sparsity_above_m(tmp_path: Path, model_path: Path):
    assert cli_main(["attack", "--model", str(model_path), "--k", "19", "--output-dir", str(tmp_path)]) == 1


def test_missing_model(tmp_path: Path):
    assert cli_main(["metrics", "--model", str(tmp_path / "nope.json"), "--attack", str(tmp_path / "a.json")]) == 1


def test_attack_of_another_model(tmp_path: Path, attack_path: Path):
    out = tmp_path / "ieee14"
    assert cli_main(["build", "--case", "ieee14", "--output-dir", str(out)]) == 0
    assert cli_main(["metrics", "--model", str(out / "model.json"), "--attack", str(attack_path)]) == 1


def test_bad_rho(tmp_path: Path):
    assert cli_main(["build", "--rho", "1.2", "--output-dir", str(tmp_path)]) == 1


def test_version(capsys: pytest.CaptureFixture[str]):
    assert cli_main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
