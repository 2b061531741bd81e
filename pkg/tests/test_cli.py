from __future__ import annotations

import os

import numpy as np
import pytest

from f2a.cli import main
from f2a.config import load_config
from f2a.errors import ConfigError
from f2a.retrieval import load_store

MINI = """\
dataset = mini
seed = 5
L = 16
H = 4
C = 3
D = 4
k = 2
stride = 4
num_series = 2
length = 400
channels = 4
anomaly_rate = 0.05
precursor_lead = 6
spike_magnitude = 6.0
noise_std = 0.1
db_test_fraction = 0.3
train.epochs = 2
train.batch_size = 32
train.pretrain_epochs = 2
metric.l_buf = 4
"""


def _write_cfg(tmp_path, out_name="run", extra=""):
    cfg_path = tmp_path / f"mini_{out_name}.cfg"
    cfg_path.write_text(MINI + f"out_dir = {tmp_path / out_name}\n" + extra)
    return str(cfg_path)


def _run_flow(cfg_path):
    assert main(["synth", "-c", cfg_path]) == 0
    assert main(["train", "-c", cfg_path, "--set", "k=0"]) == 0
    assert main(["build-db", "-c", cfg_path]) == 0
    assert main(["train", "-c", cfg_path]) == 0
    assert main(["predict", "-c", cfg_path]) == 0
    assert main(["eval", "-c", cfg_path]) == 0


def test_full_flow_artifacts(tmp_path):
    cfg_path = _write_cfg(tmp_path)
    _run_flow(cfg_path)
    cfg = load_config(cfg_path)
    out = cfg["out_dir"]
    assert os.path.exists(os.path.join(out, "data", "synth_00.csv"))
    assert os.path.exists(os.path.join(out, "store.f2ar"))
    assert os.path.exists(os.path.join(out, "checkpoint_k0_lam1_psi3.f2am"))
    assert os.path.exists(os.path.join(out, "checkpoint_k2_lam1_psi3.f2am"))
    assert os.path.exists(os.path.join(out, "scores", "k2_lam1_psi3", "synth_01.csv"))
    metrics = os.path.join(out, "metrics.csv")
    lines = open(metrics).read().splitlines()
    assert lines[0] == "dataset,variant,k,vus_pr,ap,precision,recall,f1,u,L_buf"
    fields = lines[1].split(",")
    assert fields[0] == "mini" and fields[1] == "k2_lam1_psi3" and fields[2] == "2"
    for v in map(float, fields[3:8]):
        assert 0.0 <= v <= 1.0

    # Store split policy: all train windows plus the leading 30% of test windows.
    per_series = (400 - 16 - 4) // 4 + 1
    want = per_series + int(np.floor(0.3 * per_series))
    store = load_store(os.path.join(out, "store.f2ar"))
    assert len(store) == want


def test_flow_is_byte_deterministic(tmp_path):
    cfg_a = _write_cfg(tmp_path, "run_a")
    cfg_b = _write_cfg(tmp_path, "run_b")
    _run_flow(cfg_a)
    _run_flow(cfg_b)
    out_a = load_config(cfg_a)["out_dir"]
    out_b = load_config(cfg_b)["out_dir"]
    for rel in (
        os.path.join("data", "synth_00.csv"),
        os.path.join("data", "synth_01.csv"),
        "store.f2ar",
        "checkpoint_k2_lam1_psi3.f2am",
        "train_log_k2_lam1_psi3.csv",
        os.path.join("scores", "k2_lam1_psi3", "synth_01.csv"),
        "metrics.csv",
    ):
        a = open(os.path.join(out_a, rel), "rb").read()
        b = open(os.path.join(out_b, rel), "rb").read()
        assert a == b, f"{rel} differs between identical runs"


def test_seed_changes_bytes(tmp_path):
    cfg_path = _write_cfg(tmp_path)
    assert main(["synth", "-c", cfg_path]) == 0
    cfg2 = _write_cfg(tmp_path, "run2", extra="")
    assert main(["synth", "-c", cfg2, "--set", "seed=6", "--set",
                 f"data.dir={tmp_path / 'run2' / 'data'}"]) == 0
    a = open(os.path.join(load_config(cfg_path)["out_dir"], "data", "synth_00.csv"), "rb").read()
    b = open(os.path.join(str(tmp_path / "run2"), "data", "synth_00.csv"), "rb").read()
    assert a != b


def test_no_silent_overwrite(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    assert main(["synth", "-c", cfg_path]) == 0
    assert main(["synth", "-c", cfg_path]) == 2
    err = capsys.readouterr().err
    assert "--force" in err and "synth_00.csv" in err
    assert main(["synth", "-c", cfg_path, "--force"]) == 0


def test_schema_rejects_before_any_work(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    assert main(["synth", "-c", cfg_path, "--set", "anomaly_rate=0.9"]) == 2
    assert "anomaly_rate" in capsys.readouterr().err
    assert not os.path.exists(load_config(cfg_path)["out_dir"])

    bad = tmp_path / "bad.cfg"
    bad.write_text(MINI + "not_a_key = 1\n")
    assert main(["synth", "-c", str(bad)]) == 2
    assert "not_a_key" in capsys.readouterr().err


def test_db_fraction_one_refused(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    assert main(["synth", "-c", cfg_path]) == 0
    assert main(["train", "-c", cfg_path, "--set", "k=0", "--set", "db_test_fraction=1.0"]) == 2
    assert "db_test_fraction" in capsys.readouterr().err


def test_missing_upstream_artifacts_named(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    assert main(["predict", "-c", cfg_path]) == 2
    err = capsys.readouterr().err
    assert "synth" in err  # data missing is detected first, with remediation hint
    assert main(["synth", "-c", cfg_path]) == 0
    assert main(["build-db", "-c", cfg_path]) == 2
    err = capsys.readouterr().err
    assert "checkpoint" in err
    assert main(["train", "-c", cfg_path]) == 2  # k=2 without a store
    err = capsys.readouterr().err
    assert "store" in err and "build-db" in err


def test_eval_threshold_changes_f1_not_vus(tmp_path):
    cfg_path = _write_cfg(tmp_path)
    _run_flow(cfg_path)
    out = load_config(cfg_path)["out_dir"]
    row_default = open(os.path.join(out, "metrics.csv")).read().splitlines()[1].split(",")
    assert main(["eval", "-c", cfg_path, "--force", "--set", "loss.threshold=0.9"]) == 0
    row_new = open(os.path.join(out, "metrics.csv")).read().splitlines()[1].split(",")
    assert row_new[3] == row_default[3]  # vus_pr is threshold-free
    assert row_new[8] != row_default[8]  # u column reflects the override


def test_checkpoint_k_mismatch_detected(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    assert main(["synth", "-c", cfg_path]) == 0
    assert main(["train", "-c", cfg_path, "--set", "k=0"]) == 0
    # Point predict at the k=0 checkpoint while claiming k=0 in its name but k=2 in config.
    assert main(["predict", "-c", cfg_path, "--set", "variant=k0_lam1_psi3"]) == 2
    err = capsys.readouterr().err
    assert "k=0" in err and "k=2" in err


def test_ablate_produces_combined_table(tmp_path):
    cfg_path = _write_cfg(tmp_path)
    assert main(["synth", "-c", cfg_path]) == 0
    assert main(["ablate", "-c", cfg_path]) == 0
    out = load_config(cfg_path)["out_dir"]
    lines = open(os.path.join(out, "metrics.csv")).read().splitlines()
    assert len(lines) == 7  # header + k sweep {0,3,5,7} + lambda=0 + psi=1
    rows = [line.split(",") for line in lines[1:]]
    assert [r[1] for r in rows] == [
        "k0_lam1_psi3",
        "k3_lam1_psi3",
        "k5_lam1_psi3",
        "k7_lam1_psi3",
        "k3_lam0_psi3",
        "k3_lam1_psi1",
    ]
    assert {r[0] for r in rows} == {"mini"}
    assert [r[2] for r in rows] == ["0", "3", "5", "7", "3", "3"]


def test_desk_preset_end_to_end_under_budget(tmp_path):
    import time

    t0 = time.perf_counter()
    override = ["--set", f"out_dir={tmp_path / 'desk'}", "--set", f"data.dir={tmp_path / 'desk' / 'data'}"]
    for cmd in (
        ["synth", "-c", "desk"],
        ["train", "-c", "desk", "--set", "k=0"],
        ["build-db", "-c", "desk"],
        ["train", "-c", "desk"],
        ["predict", "-c", "desk"],
        ["eval", "-c", "desk"],
    ):
        assert main(cmd + override) == 0, f"{cmd} failed"
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"desk preset end-to-end took {elapsed:.0f}s"
    lines = open(os.path.join(tmp_path / "desk", "metrics.csv")).read().splitlines()
    assert len(lines) == 2


def test_synth_requires_visible_precursors(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    assert main(["synth", "-c", cfg_path, "--set", "precursor_lead=16"]) == 2  # L is 16
    assert "precursor_lead" in capsys.readouterr().err


def test_preset_loads_and_unknown_config_rejected():
    cfg = load_config("desk")
    assert cfg["L"] == 64 and cfg["C"] == 4 and cfg["H"] == 8
    assert cfg["stride"] == 8  # derived default: stride = H
    assert cfg["metric.l_buf"] == 8
    with pytest.raises(ConfigError, match="neither a preset"):
        load_config("no_such_config_anywhere.cfg")
