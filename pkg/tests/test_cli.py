import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbmlab.cli import main
from bbmlab.experiment import (ConfigError, ExperimentConfig, analyze, read_results,
                               run_experiment, validate_config)


def unit_atom_config(**over):
    base = {
        "schema": 1,
        "model": {"kind": "atoms", "atoms": [{"loc": 0.0, "weight": 1.0, "p2": 1.0}]},
        "x0": 0.0,
        "horizon_t": 1.0,
        "checkpoints_t": [0.5, 1.0],
        "dt": 0.01,
        "replicates": 300,
        "seed": 7,
        "fronts": [{"kind": "R2", "delta": 0.9,
                    "correction": {"name": "zero", "coef": 0.0}, "side": "abs"}],
        "population_cap": 1e7,
        "scheme": "bridge",
    }
    base.update(over)
    return base


def test_config_roundtrip_exact():
    cfg = ExperimentConfig.from_dict(unit_atom_config())
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert again.config_hash == cfg.config_hash


@given(dt=st.sampled_from([0.01, 0.005, 0.002]),
       reps=st.integers(1, 500), seed=st.integers(0, 2**31),
       delta=st.floats(0.55, 0.95))
@settings(max_examples=40, deadline=None)
def test_config_roundtrip_property(dt, reps, seed, delta):
    d = unit_atom_config(dt=dt, replicates=reps, seed=seed)
    d["fronts"][0]["delta"] = delta
    cfg = ExperimentConfig.from_dict(d)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_config_rejections():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(unit_atom_config(replicates=0))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(unit_atom_config(checkpoints_t=[1.0, 0.5]))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(unit_atom_config(checkpoints_t=[0.5, 2.0]))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(unit_atom_config(dt=-0.1))
    bad = unit_atom_config()
    del bad["seed"]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_validate_gates_subcritical():
    cfg = ExperimentConfig.from_dict(unit_atom_config(
        model={"kind": "atoms", "atoms": [{"loc": 0.0, "weight": 1.0, "p2": 0.5}]}))
    with pytest.raises(ConfigError):
        validate_config(cfg)
    cap = ExperimentConfig.from_dict(unit_atom_config(horizon_t=40.0,
                                                      checkpoints_t=[40.0],
                                                      population_cap=100.0))
    with pytest.raises(ConfigError):
        validate_config(cap)


def test_run_is_byte_identical_across_threads(tmp_path):
    cfg = ExperimentConfig.from_dict(unit_atom_config())
    outs = []
    for threads in (1, 4, 16):
        out = tmp_path / f"run_{threads}"
        run_experiment(cfg, out, threads=threads)
        outs.append((out / "results.tsv").read_bytes())
        (out / "header.json").read_bytes()
    assert outs[0] == outs[1] == outs[2]


def test_results_roundtrip(tmp_path):
    cfg = ExperimentConfig.from_dict(unit_atom_config())
    out = tmp_path / "run"
    run_experiment(cfg, out, threads=2)
    cfg2, header, ens = read_results(out)
    assert cfg2.config_hash == cfg.config_hash
    assert ens.n_replicates == cfg.replicates
    assert header["constants"]["c_star"] == pytest.approx(2.0, abs=1e-9)
    assert header["spectral"]["lambda"] == pytest.approx(-0.5, abs=1e-12)


def test_analyze_outputs_embed_hash(tmp_path):
    cfg = ExperimentConfig.from_dict(unit_atom_config())
    out = tmp_path / "run"
    run_experiment(cfg, out, threads=2)
    analyze(out, {"analyses": [{"kind": "tail", "front": 0},
                               {"kind": "yaglom", "front": 0}]})
    text = (out / "verdicts.csv").read_text()
    assert cfg.config_hash in text
    plot = (out / "tail_front0.dat").read_text()
    assert cfg.config_hash in plot.splitlines()[0]
    assert len(plot.splitlines()) == 3


def test_cli_exit_codes(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(unit_atom_config(replicates=50)))
    assert main(["validate", "--config", str(cfg_path)]) == 0

    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps(unit_atom_config(dt=-1.0)))
    assert main(["validate", "--config", str(bad_path)]) == 2

    sub_path = tmp_path / "sub.json"
    sub_path.write_text(json.dumps(unit_atom_config(
        model={"kind": "shell", "dim": 3, "radius": 1.0, "weight": 1.0, "p2": 0.7})))
    assert main(["validate", "--config", str(sub_path)]) == 2

    out = tmp_path / "res"
    assert main(["run", "--config", str(cfg_path), "--out", str(out), "--quiet"]) == 0
    spec_path = tmp_path / "an.json"
    spec_path.write_text(json.dumps({"analyses": [{"kind": "tail", "front": 3}]}))
    assert main(["analyze", str(out), "--spec", str(spec_path)]) == 4
    spec_path.write_text(json.dumps({"analyses": [{"kind": "gumbel", "t": 1.0,
                                                   "proxy_T": 0.3}]}))
    assert main(["analyze", str(out), "--spec", str(spec_path)]) == 4
    assert main(["analyze", str(tmp_path / "nowhere"), "--spec", str(spec_path)]) == 4
    spec_path.write_text(json.dumps({"analyses": [{"kind": "tail", "front": 0},
                                                  {"kind": "speed"}]}))
    assert main(["analyze", str(out), "--spec", str(spec_path)]) == 4  # < 4 ladder points
    spec_path.write_text(json.dumps({"analyses": [{"kind": "tail", "front": 0}]}))
    assert main(["analyze", str(out), "--spec", str(spec_path)]) == 0
    assert main(["report", str(out)]) == 0


def test_cli_checkpoint_and_front_overrides(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(unit_atom_config(replicates=30)))
    out = tmp_path / "res"
    assert main(["run", "--config", str(cfg_path), "--out", str(out), "--quiet",
                 "--checkpoint", "0.25", "--checkpoint", "0.75",
                 "--front", json.dumps({"kind": "R1", "shift": 0.0})]) == 0
    cfg2, header, ens = read_results(out)
    assert list(cfg2.checkpoints_t) == [0.25, 0.75]
    assert cfg2.fronts[0].kind == "R1"
    assert main(["run", "--config", str(cfg_path), "--out", str(out), "--quiet",
                 "--front", "not json"]) == 2


def test_analysis_reruns_are_identical(tmp_path):
    cfg = ExperimentConfig.from_dict(unit_atom_config(replicates=200))
    out = tmp_path / "run"
    run_experiment(cfg, out, threads=2)
    spec = {"analyses": [{"kind": "tail", "front": 0}, {"kind": "yaglom", "front": 0}]}
    analyze(out, spec)
    first = (out / "verdicts.csv").read_bytes()
    analyze(out, spec)
    assert (out / "verdicts.csv").read_bytes() == first


def test_smoke_pipeline_under_60s(tmp_path):
    t0 = time.time()
    cfg = ExperimentConfig.from_dict(unit_atom_config(
        horizon_t=2.0, checkpoints_t=[0.5, 1.0, 2.0], dt=0.005, replicates=2000))
    out = tmp_path / "smoke"
    run_experiment(cfg, out, threads=1)
    analyze(out, {"analyses": [{"kind": "tail", "front": 0},
                               {"kind": "yaglom", "front": 0},
                               {"kind": "gumbel", "t": 2.0, "proxy_T": 1.0}]})
    assert time.time() - t0 < 60.0


def test_results_schema_mismatch_rejected(tmp_path):
    cfg = ExperimentConfig.from_dict(unit_atom_config(replicates=20))
    out = tmp_path / "run"
    run_experiment(cfg, out, threads=1)
    tsv = out / "results.tsv"
    lines = tsv.read_text().splitlines()
    lines[0] = lines[0].replace("schema=1", "schema=99")
    tsv.write_text("\n".join(lines) + "\n")
    with pytest.raises(ConfigError):
        read_results(out)
