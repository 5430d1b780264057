"""CLI surface: subcommands, exit codes, config validation."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from fieldrom.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


TINY_ADVECTION = {
    "experiment": "advection",
    "grid": [40],
    "extent": [1.0],
    "dt": 0.01,
    "steps": 8,
    "latent_dim": 2,
    "width_factor": 6,
    "train": {"epochs_per_stage": 2, "batch_size": 4},
    "sampling": {"mode": "all"},
    "pod": {"enabled": False},
}


def _write_config(tmp_path, cfg):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_simulate_writes_archives(runner, tmp_path):
    cfg = _write_config(tmp_path, TINY_ADVECTION)
    result = runner.invoke(main, ["simulate", "--config", cfg, "--out", str(tmp_path / "data")])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "data" / "train" / "manifest.json").exists()
    assert (tmp_path / "data" / "train" / "traj_0.f64").exists()
    assert (tmp_path / "data" / "test" / "coords.f64").exists()


def test_pipeline_train_select_run_eval(runner, tmp_path):
    cfg = _write_config(tmp_path, TINY_ADVECTION)
    data = str(tmp_path / "data")
    model = str(tmp_path / "model")
    assert runner.invoke(main, ["simulate", "--config", cfg, "--out", data]).exit_code == 0
    r = runner.invoke(main, ["train", "--config", cfg, "--data", data + "/train",
                             "--out", model])
    assert r.exit_code == 0, r.output
    assert (tmp_path / "model" / "decoder.json").exists()
    assert (tmp_path / "model" / "encoder.f64").exists()
    assert (tmp_path / "model" / "training_report.json").exists()

    samples = str(tmp_path / "samples.json")
    r = runner.invoke(main, [
        "select-samples", "--config", cfg, "--model", model,
        "--data", data + "/train", "--out", samples,
    ])
    assert r.exit_code == 0, r.output
    payload = json.loads((tmp_path / "samples.json").read_text())
    assert payload["indices"] == list(range(40))

    runs = str(tmp_path / "runs")
    r = runner.invoke(main, [
        "rom-run", "--config", cfg, "--model", model, "--samples", samples,
        "--data", data + "/test", "--out", runs,
    ])
    assert r.exit_code == 0, r.output
    assert (tmp_path / "runs" / "run_0" / "latent.csv").exists()
    assert (tmp_path / "runs" / "run_0" / "reconstruction" / "manifest.json").exists()

    r = runner.invoke(main, [
        "eval", "--candidate", str(tmp_path / "runs" / "run_0" / "reconstruction"),
        "--reference", data + "/test",
    ])
    assert r.exit_code == 0, r.output
    report = json.loads(r.output[r.output.index("[") :])
    assert "relative_l2" in report[0]


def test_pod_command(runner, tmp_path):
    cfg = _write_config(tmp_path, TINY_ADVECTION)
    data = str(tmp_path / "data")
    runner.invoke(main, ["simulate", "--config", cfg, "--out", data])
    r = runner.invoke(main, [
        "pod", "--data", data + "/train", "--latent-dim", "2",
        "--out", str(tmp_path / "basis"), "--run-data", data + "/test",
    ])
    assert r.exit_code == 0, r.output
    assert (tmp_path / "basis.json").exists()
    assert (tmp_path / "basis.f64").exists()


def test_invalid_config_exits_2(runner, tmp_path):
    bad = dict(TINY_ADVECTION, experiment="wavelets")
    cfg = _write_config(tmp_path, bad)
    r = runner.invoke(main, ["simulate", "--config", cfg, "--out", str(tmp_path / "x")])
    assert r.exit_code == 2
    assert "error" in r.output or "error" in (r.stderr or "")


def test_unknown_schema_key_exits_2(runner, tmp_path):
    bad = dict(TINY_ADVECTION)
    bad["not_a_field"] = 1
    cfg = _write_config(tmp_path, bad)
    r = runner.invoke(main, ["simulate", "--config", cfg, "--out", str(tmp_path / "x")])
    assert r.exit_code == 2


def test_wellposedness_violation_exits_2(runner, tmp_path):
    # |M| * d < r must be rejected at validation time
    bad = dict(TINY_ADVECTION, latent_dim=4)
    bad["sampling"] = {"mode": "uniform", "count": 3}
    cfg = _write_config(tmp_path, bad)
    r = runner.invoke(main, ["simulate", "--config", cfg, "--out", str(tmp_path / "x")])
    assert r.exit_code == 2
    assert "ill-posed" in r.output or "ill-posed" in (r.stderr or "")


def test_missing_config_exits_2(runner, tmp_path):
    r = runner.invoke(main, ["simulate", "--out", str(tmp_path / "x")])
    assert r.exit_code == 2


def test_paper_config_presets_carry_reference_values(runner):
    from fieldrom.experiments import paper_config

    thermo = paper_config("thermo")
    assert thermo["grid"] == [501] and thermo["latent_dim"] == 16
    assert thermo["sampling"]["count"] == 22
    image = paper_config("image")
    assert image["grid"] == [256, 256] and image["latent_dim"] == 16
    assert image["sampling"]["count"] == 63
    advection = paper_config("advection")
    assert advection["grid"] == [100] and advection["latent_dim"] == 1
    burgers = paper_config("burgers")
    assert burgers["grid"] == [256] and burgers["latent_dim"] == 2
    with pytest.raises(Exception):
        paper_config("navier-stokes")


def test_run_reports_are_deterministic(tmp_path):
    """Two runs of the same config and seed produce identical numeric
    reports (timings and wall-clock excluded)."""
    from fieldrom.experiments import run_experiment

    cfg = dict(TINY_ADVECTION)

    def strip(obj):
        if isinstance(obj, dict):
            return {
                k: strip(v)
                for k, v in obj.items()
                if k not in ("timings", "wall_seconds", "seconds")
            }
        if isinstance(obj, list):
            return [strip(v) for v in obj]
        return obj

    rep_a = strip(run_experiment(cfg, tmp_path / "a", verbose=False))
    rep_b = strip(run_experiment(cfg, tmp_path / "b", verbose=False))
    assert json.dumps(rep_a, sort_keys=True, default=str) == json.dumps(
        rep_b, sort_keys=True, default=str
    )


def test_sweep_dt_command(runner, tmp_path):
    cfg = _write_config(tmp_path, TINY_ADVECTION)
    data = str(tmp_path / "data")
    model = str(tmp_path / "model")
    runner.invoke(main, ["simulate", "--config", cfg, "--out", data])
    runner.invoke(main, ["train", "--config", cfg, "--data", data + "/train", "--out", model])
    r = runner.invoke(main, [
        "sweep-dt", "--config", cfg, "--model", model, "--data", data + "/test",
        "--multipliers", "1,2",
    ])
    assert r.exit_code == 0, r.output
    verdicts = json.loads(r.output[r.output.index("[") :])
    assert len(verdicts) == 2
    assert {"multiplier", "dt", "full_order", "reduced"} <= set(verdicts[0])


def test_pareto_command(runner, tmp_path):
    cfg = _write_config(tmp_path, TINY_ADVECTION)
    data = str(tmp_path / "data")
    model = str(tmp_path / "model")
    runner.invoke(main, ["simulate", "--config", cfg, "--out", data])
    runner.invoke(main, ["train", "--config", cfg, "--data", data + "/train", "--out", model])
    out_csv = tmp_path / "pareto.csv"
    r = runner.invoke(main, [
        "pareto", "--config", cfg, "--model", model, "--data", data + "/test",
        "--sample-counts", "6,12", "--inversions", "gauss_newton,linearized",
        "--out", str(out_csv),
    ])
    assert r.exit_code == 0, r.output
    rows = out_csv.read_text().strip().splitlines()
    assert len(rows) == 1 + 4  # header + 2 counts x 2 modes
