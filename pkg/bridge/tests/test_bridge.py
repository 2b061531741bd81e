"""Bridge conformance against the engine's external interfaces.

The engine package (f2a) appears here only as the test oracle: exported
files must pass its loader's validation, and the bridge's window keys must
match the engine's own enumeration on the same CSVs exactly.
"""

from __future__ import annotations

import numpy as np
import pytest

from tsfm_bridge import BackboneLoadError, BridgeJob, export, get_backbone
from tsfm_bridge.cli import main

from f2a.dataset import SynthConfig, gen_synthetic, make_windows, read_series_csv, select_channels, write_series_csv
from f2a.errors import DimensionError
from f2a.forecaster import ExternalForecaster, load_external
from f2a.fusion import f2a_forward, init_fusion_params
from f2a.retrieval import build_store

L, H, C, D = 32, 4, 3, 8


@pytest.fixture()
def csv_files(tmp_path):
    paths = []
    for i, channels in enumerate((4, 2)):  # one series wider, one narrower than C
        series = gen_synthetic(
            SynthConfig(length=300 + 40 * i, channels=channels, anomaly_rate=0.04,
                        precursor_lead=8, spike_magnitude=5.0, noise_std=0.1, seed=30 + i),
            name=f"series_{i}",
        )
        path = tmp_path / f"series_{i}.csv"
        write_series_csv(series, path)
        paths.append(str(path))
    return paths


def _job(csv_files, tmp_path, backbone="fourier", **kw):
    return BridgeJob(inputs=csv_files, out_path=str(tmp_path / "out.f2ae"),
                     backbone=backbone, l_ctx=L, h_horizon=H, c=C, d=D, **kw)


def test_export_passes_engine_validation(csv_files, tmp_path, capsys):
    job = _job(csv_files, tmp_path)
    report = export(job)
    table = load_external(job.out_path, expect_dims=(C, D, H))
    assert len(table) == report.records
    for key, (emb, fc) in table.items():
        assert emb.e.shape == (C, D)
        assert fc.shape == (H, C)
        assert np.all(np.isfinite(emb.e)) and np.all(np.isfinite(fc))
    with capsys.disabled():
        print(f"PASS bridge-conformance(load): {report.records} records validate under the engine loader")


def test_window_keys_match_engine_enumeration(csv_files, tmp_path, capsys):
    job = _job(csv_files, tmp_path)
    report = export(job)
    engine_keys = set()
    for path in csv_files:
        series = read_series_csv(path)
        plan = select_channels(series, C, (0, series.length))
        for w in make_windows(series, plan, L, H, stride=H):
            engine_keys.add(w.origin)
    assert set(report.keys) == engine_keys
    assert len(report.keys) == len(engine_keys)  # no duplicates either
    with capsys.disabled():
        print(f"PASS bridge-conformance(keys): {len(engine_keys)} window keys identical to engine enumeration")


def test_engine_can_drive_fusion_from_export(csv_files, tmp_path):
    job = _job(csv_files, tmp_path)
    export(job)
    external = ExternalForecaster(load_external(job.out_path, expect_dims=(C, D, H)))
    series = read_series_csv(csv_files[0])
    plan = select_channels(series, C, (0, series.length))
    windows = make_windows(series, plan, L, H, stride=H)
    store = build_store(windows, external)
    fusion = init_fusion_params(H, C, np.random.default_rng(0))
    trace = f2a_forward(windows[0].x, external, store, 2, fusion, origin=windows[0].origin)
    assert trace.p.shape == (H,)
    assert np.all((trace.p > 0) & (trace.p < 1))


def test_reexport_is_byte_identical(csv_files, tmp_path):
    job_a = BridgeJob(inputs=csv_files, out_path=str(tmp_path / "a.f2ae"),
                      backbone="fourier", l_ctx=L, h_horizon=H, c=C, d=D)
    job_b = BridgeJob(inputs=csv_files, out_path=str(tmp_path / "b.f2ae"),
                      backbone="fourier", l_ctx=L, h_horizon=H, c=C, d=D)
    export(job_a)
    export(job_b)
    assert (tmp_path / "a.f2ae").read_bytes() == (tmp_path / "b.f2ae").read_bytes()


def test_both_backbones_shapes():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(L, C))
    for name in ("naive", "fourier"):
        model = get_backbone(name, L, H, C, D)
        assert model.embed(x).shape == (C, D)
        assert model.forecast(x).shape == (H, C)


def test_naive_backbone_holds_last_value():
    model = get_backbone("naive", L, H, C, D)
    x = np.arange(L * C, dtype=float).reshape(L, C)
    fc = model.forecast(x)
    assert np.array_equal(fc, np.tile(x[-1], (H, 1)))


def test_unknown_backbone_is_load_error(csv_files, tmp_path):
    with pytest.raises(BackboneLoadError, match="unknown backbone"):
        export(_job(csv_files, tmp_path, backbone="tspulse-xxl"))


def test_job_validation(tmp_path):
    with pytest.raises(ValueError, match="no input"):
        BridgeJob(inputs=[], out_path="x", backbone="naive", l_ctx=L, h_horizon=H, c=C, d=D)
    with pytest.raises(ValueError, match="L must be"):
        BridgeJob(inputs=["a.csv"], out_path="x", backbone="naive", l_ctx=0, h_horizon=H, c=C, d=D)


def test_engine_rejects_wrong_dims_from_file(csv_files, tmp_path):
    job = _job(csv_files, tmp_path)
    export(job)
    with pytest.raises(DimensionError, match="D=8"):
        load_external(job.out_path, expect_dims=(C, D + 1, H))


def test_cli_export(csv_files, tmp_path, capsys):
    out = str(tmp_path / "cli.f2ae")
    code = main(["export", "--data", *csv_files, "--out", out, "--backbone", "naive",
                 "-L", str(L), "-H", str(H), "-C", str(C), "-D", str(D)])
    assert code == 0
    assert "wrote" in capsys.readouterr().out
    assert load_external(out, expect_dims=(C, D, H))

    code = main(["export", "--data", str(tmp_path / "missing.csv"), "--out", out,
                 "--backbone", "naive", "-L", str(L), "-H", str(H), "-C", str(C), "-D", str(D)])
    assert code == 2
