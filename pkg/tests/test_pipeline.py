import csv
import json
import os

import numpy as np
import pytest

from biphoton import pipeline
from biphoton.cli import main
from biphoton.config import ConfigError, ExperimentConfig, FrameCounts, config_from_dict, save_config

SMALL = ExperimentConfig(frames=FrameCounts(dark=1000, near=20_000, far=20_000), seed=17)


@pytest.fixture(scope="module")
def run():
    return pipeline.run_pipeline(SMALL)


def test_symmetric_pump_matches_model(run):
    e, t = run.entanglement, run.theory
    assert e.entangled_x and e.entangled_y
    assert e.gamma_x == pytest.approx(e.gamma_y, rel=0.25)
    assert e.gamma_x < 0.5 and e.gamma_y < 0.5
    assert run.near_x.unit == "m" and run.far_x.unit == "hbar/m"
    assert t.gamma_x == pytest.approx(0.0158, abs=1e-4)


def test_elliptic_pump_orders_gammas():
    r = pipeline.run_pipeline(SMALL.with_beta(0.193))
    assert r.entanglement.gamma_y > r.entanglement.gamma_x
    assert r.entanglement.beta == pytest.approx(0.193)


def test_invalid_config_rejected_before_simulation():
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 1, "frames": {"near": 0}})
    with pytest.raises(ConfigError):
        pipeline.run_pipeline({"schema_version": 1})


def test_results_round_trip(run, tmp_path):
    files = pipeline.emit_outputs(run, tmp_path)
    back = pipeline.load_results(files[0])
    assert back == run
    assert pipeline.report_to_dict(back) == pipeline.report_to_dict(run)


def test_results_units(run):
    doc = pipeline.report_to_dict(run)
    m = doc["measurements"]
    assert m["near_x"]["width"]["unit"] == "m" and m["near_x"]["width"]["display"].endswith("µm")
    assert m["far_y"]["width"]["unit"] == "hbar/m"
    assert doc["entanglement"]["gamma_x"]["unit"] == "hbar"
    doc["measurements"]["near_x"]["width"]["unit"] = "px"
    with pytest.raises(Exception):
        pipeline.validate_results(doc)


def test_profile_tables(run, tmp_path):
    pipeline.emit_outputs(run, tmp_path)
    for name, axis in run.axes().items():
        with open(tmp_path / "profiles" / f"{name}.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["offset", "jdp_value", "fit_value"]
        assert len(rows) - 1 == len(axis.profile.offsets)
        jdp = np.loadtxt(tmp_path / "jdp" / f"{name}.csv", delimiter=",")
        assert jdp.shape == (64, 64)
        acc = np.load(tmp_path / "jdp" / f"{name}_accumulators.npz")
        assert np.array_equal(acc["same_frame_sum"], axis.jdp.same_frame_sum)


def test_run_is_deterministic_and_reproducible_from_echo(run, tmp_path):
    again = pipeline.run_pipeline(SMALL, workers=2)
    a = pipeline.dumps(pipeline.report_to_dict(run))
    b = pipeline.dumps(pipeline.report_to_dict(again))
    assert a == b
    echo = config_from_dict(json.loads(a)["config"])
    assert pipeline.dumps(pipeline.report_to_dict(pipeline.run_pipeline(echo))) == a


def test_sweep_outputs(tmp_path):
    cfg = ExperimentConfig(frames=FrameCounts(dark=500, near=3000, far=3000), seed=2)
    sweep = pipeline.sweep_beta(cfg, [0.8, 0.4])
    assert len(sweep.runs) == 2
    files = pipeline.emit_outputs(sweep, tmp_path, plots=True)
    with open(tmp_path / "trend.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["beta"]) for r in rows] == [0.8, 0.4]
    assert os.path.exists(tmp_path / "gamma_vs_beta.svg")
    assert pipeline.load_results(files[0]) == sweep
    single = pipeline.sweep_beta(cfg, [0.5])
    assert len(single.runs) == 1


def test_sweep_rejects_bad_beta():
    with pytest.raises(ConfigError):
        pipeline.sweep_beta(SMALL, [1.5])
    with pytest.raises(ConfigError):
        pipeline.sweep_beta(SMALL, [])


def test_stage_errors_are_labelled(tmp_path):
    bad = tmp_path / "near.bpfs"
    bad.write_bytes(b"garbage")
    with pytest.raises(pipeline.PipelineError) as err:
        pipeline.run_pipeline(SMALL, stacks={"near": str(bad)})
    assert err.value.stage == "load near"


def test_pass_seeds_are_distinct():
    seeds = {pipeline.pass_seed(1, t) for t in ("dark", "near", "far")}
    assert len(seeds) == 3
    assert pipeline.pass_seed(1, "near") == pipeline.pass_seed(1, "near")


# ---------------------------------------------------------------- CLI

def _cfg(tmp_path, **frames):
    cfg = ExperimentConfig(frames=FrameCounts(**{"dark": 500, "near": 3000, "far": 3000, **frames}),
                           seed=8)
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    return str(path)


def test_cli_simulate_then_analyze_matches_pipeline(tmp_path):
    cfg = _cfg(tmp_path)
    d = str(tmp_path / "stacks")
    assert main(["simulate-dark", "--config", cfg, "--out", d]) == 0
    assert main(["simulate", "--mode", "near", "--config", cfg, "--out", d, "--workers", "2"]) == 0
    assert main(["simulate", "--mode", "far", "--config", cfg, "--out", d]) == 0
    a_out, p_out = str(tmp_path / "a"), str(tmp_path / "p")
    assert main(["analyze", "--config", cfg, "--out", a_out, "--dark", f"{d}/dark.bpfs",
                 "--near", f"{d}/near.bpfs", "--far", f"{d}/far.bpfs"]) == 0
    assert main(["pipeline", "--config", cfg, "--out", p_out]) == 0
    with open(f"{a_out}/results.json", "rb") as a, open(f"{p_out}/results.json", "rb") as p:
        assert a.read() == p.read()


def test_cli_theory(tmp_path, capsys):
    assert main(["theory", "--out", str(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["sigma_minus"] == pytest.approx(12.11e-6, abs=1e-8)


def test_cli_sweep(tmp_path):
    cfg = _cfg(tmp_path)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s"), "--betas", "0.9,0.5"]) == 0
    with open(tmp_path / "s" / "trend.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2


@pytest.mark.parametrize("argv", [
    ["pipeline", "--frames", "0"],
    ["simulate"],
    ["nonsense"],
    ["sweep", "--betas", "2.0"],
    ["pipeline", "--config", "/nonexistent/cfg.json"],
])
def test_cli_validation_exit_code(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 1


def test_cli_bad_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"schema_version": 1, "frames": {"near": 1}}))
    assert main(["pipeline", "--config", str(path), "--out", str(tmp_path)]) == 1


def test_cli_bad_stack_exit_code(tmp_path):
    cfg = _cfg(tmp_path)
    bad = tmp_path / "bad.bpfs"
    bad.write_bytes(b"BPFS")
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path), "--dark", str(bad),
                 "--near", str(bad), "--far", str(bad)]) == 1


def test_cli_runtime_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise pipeline.PipelineError("near-field accumulation", MemoryError("out of memory"))
    monkeypatch.setattr(pipeline, "run_pipeline", boom)
    assert main(["pipeline", "--out", str(tmp_path)]) == 2
