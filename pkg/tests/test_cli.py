import json

import numpy as np
import pytest

from gpabc.cli import main


@pytest.fixture
def tiny_config_file(tmp_path):
    cfg = {
        "simulator": "gaussian",
        "acquisition": "maxv",
        "batch_size": 1,
        "max_iterations": 1,
        "seed": 3,
        "posterior_grid_resolution": 40,
        "posterior_sample_count": 200,
        "map_restarts": 1,
        "map_warm_restarts": 1,
        "map_maxiter": 20,
        "optimizer_random_points": 50,
        "optimizer_refine": 2,
        "uq_sample_paths": 40,
        "uq_grid_resolution": 25,
        "uq_chain_count": 2,
        "uq_chain_length": 1200,
        "uq_thinned": 200,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_run_writes_artifacts(tiny_config_file, tmp_path, capsys):
    out = tmp_path / "run1"
    code = main(["--out", str(out), "run", "--config", str(tiny_config_file)])
    assert code == 0
    for name in ("manifest.json", "dataset.csv", "posterior_samples.csv",
                 "posterior_grid.npz"):
        assert (out / name).exists()
    assert "dataset size = 11" in capsys.readouterr().out


def test_flag_overrides_config(tiny_config_file, tmp_path):
    out = tmp_path / "run2"
    code = main(["--seed", "99", "--out", str(out), "run",
                 "--config", str(tiny_config_file), "--max-iterations", "0"])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 99
    assert manifest["config"]["max_iterations"] == 0


def test_config_errors_exit_2(tmp_path):
    missing = tmp_path / "nope.json"
    assert main(["run", "--config", str(missing)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 2
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"simulator": "gaussian", "wat": 1}))
    assert main(["run", "--config", str(unknown)]) == 2
    assert main(["run"]) == 2  # no simulator named anywhere


def test_truth_and_tv_roundtrip(tiny_config_file, tmp_path, capsys):
    truth_path = tmp_path / "truth.npz"
    assert main(["--out", str(truth_path), "truth",
                 "--config", str(tiny_config_file)]) == 0
    run_dir = tmp_path / "run3"
    assert main(["--out", str(run_dir), "run",
                 "--config", str(tiny_config_file),
                 "--reference", str(truth_path)]) == 0
    capsys.readouterr()
    assert main(["tv", str(truth_path), str(run_dir)]) == 0
    out = capsys.readouterr().out
    assert "TV =" in out
    tv = float(out.split("=")[1])
    assert 0.0 <= tv <= 1.0


def test_uq_command(tiny_config_file, tmp_path):
    run_dir = tmp_path / "run4"
    assert main(["--out", str(run_dir), "run",
                 "--config", str(tiny_config_file)]) == 0
    assert main(["uq", "--config", str(tiny_config_file), str(run_dir),
                 "--checkpoints", "6", "11"]) == 0
    summaries = json.loads((run_dir / "uq_summaries.json").read_text())
    assert [s["dataset_size"] for s in summaries] == [6, 11]


def test_repeat_command(tiny_config_file, tmp_path, capsys):
    out = tmp_path / "rep"
    code = main(["--out", str(out), "repeat", "--config", str(tiny_config_file),
                 "--runs", "3"])
    assert code == 0
    assert (out / "tv_bands.csv").exists()
    rows = (out / "tv_bands.csv").read_text().strip().splitlines()
    assert rows[0] == "iteration,tv_median,tv_p5,tv_p95"
    assert len(rows) == 2  # one per iteration
