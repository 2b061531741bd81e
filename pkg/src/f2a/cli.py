"""Command line orchestration: synth, build-db, train, predict, eval, ablate.

Every command validates its configuration before doing any work, refuses to
overwrite existing outputs without --force, and is byte-deterministic given
the same inputs and seed. The canonical flow on a fresh directory is:

    f2a synth    -c desk
    f2a train    -c desk --set k=0        # also pretrains the shared encoder
    f2a build-db -c desk                  # store from the k=0 checkpoint
    f2a train    -c desk                  # k=3 variant, queries the store
    f2a predict  -c desk
    f2a eval     -c desk

`f2a ablate -c desk` runs the k sweep {0, 3, 5, 7} plus the loss-weight
ablations into one combined metric table.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint
from .config import load_config, variant_name
from .dataset import SynthConfig, gen_synthetic, read_series_csv, write_series_csv
from .errors import ConfigError, CoverageError, DimensionError, FormatError
from .forecaster import BuiltinForecaster, ExternalForecaster, load_external
from .loss import LossConfig
from .metrics import MetricReport, ScoredSeries, pooled_report
from .optim import TrainConfig, train
from .pipeline import PreparedData, predict_scores, prepare_data
from .retrieval import build_store, load_store, save_store

METRICS_HEADER = "dataset,variant,k,vus_pr,ap,precision,recall,f1,u,L_buf"


def _loss_cfg(cfg: dict, lam: float | None = None, psi: float | None = None) -> LossConfig:
    return LossConfig(
        lam=cfg["loss.lambda"] if lam is None else lam,
        psi=cfg["loss.psi"] if psi is None else psi,
        alpha=cfg["loss.alpha"],
        gamma=cfg["loss.gamma"],
        threshold=cfg["loss.threshold"],
        forecast_target=cfg["loss.forecast_target"],
    )


def _train_cfg(cfg: dict, k: int | None = None) -> TrainConfig:
    return TrainConfig(
        lr_max=cfg["train.lr_max"],
        lr_min=cfg["train.lr_min"],
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        beta1=cfg["train.beta1"],
        beta2=cfg["train.beta2"],
        eps_opt=cfg["train.eps"],
        weight_decay=cfg["train.weight_decay"],
        pretrain_epochs=cfg["train.pretrain_epochs"],
        seed=cfg["seed"],
        k=cfg["k"] if k is None else k,
    )


def _ensure_new(paths: list[str], force: bool) -> None:
    existing = [p for p in paths if os.path.exists(p)]
    if existing and not force:
        raise FileExistsError(
            f"refusing to overwrite existing output {existing[0]!r}; pass --force to replace it"
        )


def _store_path(cfg: dict) -> str:
    return os.path.join(cfg["out_dir"], "store.f2ar")


def _checkpoint_path(cfg: dict, variant: str) -> str:
    return os.path.join(cfg["out_dir"], f"checkpoint_{variant}.f2am")


def _log_path(cfg: dict, variant: str) -> str:
    return os.path.join(cfg["out_dir"], f"train_log_{variant}.csv")


def _scores_dir(cfg: dict, variant: str) -> str:
    return os.path.join(cfg["out_dir"], "scores", variant)


def _metrics_path(cfg: dict) -> str:
    return os.path.join(cfg["out_dir"], "metrics.csv")


def _series_names(value: str) -> list[str]:
    names = [n.strip() for n in value.split(",") if n.strip()]
    if not names:
        raise ConfigError(f"no series names in {value!r}")
    return names


def _load_series(cfg: dict, which: str):
    out = []
    for name in _series_names(cfg[f"data.{which}"]):
        path = os.path.join(cfg["data.dir"], name)
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing {which} series file {path!r}; run `f2a synth` first")
        out.append(read_series_csv(path))
    return out


def _prepare(cfg: dict) -> PreparedData:
    return prepare_data(
        _load_series(cfg, "train"),
        _load_series(cfg, "test"),
        c=cfg["C"],
        l_ctx=cfg["L"],
        h_horizon=cfg["H"],
        stride=cfg["stride"],
        db_test_fraction=cfg["db_test_fraction"],
        test_fit_fraction=cfg["test_fit_fraction"],
    )


def cmd_synth(cfg: dict, force: bool = False) -> list[str]:
    if cfg["precursor_lead"] >= cfg["L"]:
        raise ConfigError(
            f"precursor_lead={cfg['precursor_lead']} must be smaller than L={cfg['L']}, "
            "or precursors would never be visible in a context window"
        )
    data_dir = cfg["data.dir"]
    os.makedirs(data_dir, exist_ok=True)
    names = [f"synth_{i:02d}" for i in range(cfg["num_series"])]
    paths = [os.path.join(data_dir, f"{n}.csv") for n in names]
    _ensure_new(paths, force)
    test_names = set(_series_names(cfg["data.test"]))
    for i, (name, path) in enumerate(zip(names, paths)):
        length = cfg["length"]
        if cfg["test_length"] and f"{name}.csv" in test_names:
            length = cfg["test_length"]
        scfg = SynthConfig(
            num_series=1,
            length=length,
            channels=cfg["channels"],
            anomaly_rate=cfg["anomaly_rate"],
            precursor_lead=cfg["precursor_lead"],
            spike_magnitude=cfg["spike_magnitude"],
            noise_std=cfg["noise_std"],
            seed=cfg["seed"] + i,
        )
        series = gen_synthetic(scfg, name=name)
        write_series_csv(series, path)
        print(f"wrote {path} ({series.length} steps, {int(series.labels.sum())} anomalies)")
    return paths


def cmd_build_db(cfg: dict, force: bool = False, checkpoint: str | None = None) -> str:
    prep = _prepare(cfg)
    samples = prep.train_windows + prep.db_windows
    dims = (cfg["C"], cfg["D"], cfg["H"])
    if cfg["data.embeddings"]:
        table = load_external(cfg["data.embeddings"], expect_dims=dims)
        forecaster = ExternalForecaster(table)
    else:
        candidates = [checkpoint] if checkpoint else [
            _checkpoint_path(cfg, variant_name(cfg)),
            _checkpoint_path(cfg, variant_name(cfg, k=0)),
        ]
        found = next((p for p in candidates if p and os.path.exists(p)), None)
        if found is None:
            raise FileNotFoundError(
                "missing encoder checkpoint (looked for "
                + ", ".join(repr(p) for p in candidates)
                + "); train one first, e.g. `f2a train --set k=0`, or pass --checkpoint"
            )
        model = load_checkpoint(found, expect_dims=(cfg["L"], cfg["C"], cfg["D"], cfg["H"]))
        forecaster = BuiltinForecaster(model.fparams)
    store = build_store(samples, forecaster)
    path = _store_path(cfg)
    _ensure_new([path], force)
    os.makedirs(cfg["out_dir"], exist_ok=True)
    save_store(store, path)
    print(
        f"wrote {path} ({len(store)} records: {len(prep.train_windows)} train + "
        f"{len(prep.db_windows)} test-prefix windows)"
    )
    return path


def cmd_train(cfg: dict, force: bool = False) -> str:
    prep = _prepare(cfg)
    variant = variant_name(cfg)
    ckpt = _checkpoint_path(cfg, variant)
    log = _log_path(cfg, variant)
    _ensure_new([ckpt, log], force)
    store = None
    if cfg["k"] > 0:
        spath = _store_path(cfg)
        if not os.path.exists(spath):
            raise FileNotFoundError(f"missing retrieval store {spath!r}; run `f2a build-db` first")
        store = load_store(spath, expect_dims=(cfg["C"], cfg["D"], cfg["H"]))
    os.makedirs(cfg["out_dir"], exist_ok=True)
    result = train(
        prep.train_windows,
        store,
        cfg["D"],
        _loss_cfg(cfg),
        _train_cfg(cfg),
        checkpoint_path=ckpt,
        log_path=log,
    )
    last = result.log_rows[-1]
    print(f"wrote {ckpt} and {log} (final loss {last[2]:.6f} = ap {last[3]:.6f} + lam*f)")
    return ckpt


def _write_scores(cfg: dict, variant: str, prep: PreparedData, scored: list[ScoredSeries], force: bool) -> list[str]:
    sdir = _scores_dir(cfg, variant)
    os.makedirs(sdir, exist_ok=True)
    paths = []
    for es, sc in zip(prep.eval_sets, scored):
        path = os.path.join(sdir, f"{es.series.name}.csv")
        _ensure_new([path], force)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("timestep,score,label\n")
            for i in range(sc.scores.shape[0]):
                fh.write(f"{sc.offset + i},{float(sc.scores[i])!r},{int(sc.labels[i])}\n")
        paths.append(path)
        print(f"wrote {path} ({sc.scores.shape[0]} scored timesteps)")
    return paths


def cmd_predict(cfg: dict, force: bool = False) -> list[str]:
    prep = _prepare(cfg)
    variant = variant_name(cfg)
    ckpt = _checkpoint_path(cfg, variant)
    if not os.path.exists(ckpt):
        raise FileNotFoundError(f"missing checkpoint {ckpt!r}; run `f2a train` first")
    model = load_checkpoint(ckpt, expect_dims=(cfg["L"], cfg["C"], cfg["D"], cfg["H"]))
    if model.k != cfg["k"]:
        raise DimensionError(f"checkpoint {ckpt!r} was trained with k={model.k}, config says k={cfg['k']}")
    store = None
    if model.k > 0:
        store = load_store(_store_path(cfg), expect_dims=(cfg["C"], cfg["D"], cfg["H"]))
    scored = predict_scores(model, store, prep.eval_sets)
    return _write_scores(cfg, variant, prep, scored, force)


def _read_scores(path: str) -> ScoredSeries:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["timestep", "score", "label"]:
            raise FormatError(f"{path}: unexpected score file header {header}")
        rows = list(reader)
    if not rows:
        raise FormatError(f"{path}: empty score file")
    return ScoredSeries(
        scores=np.array([float(r[1]) for r in rows]),
        labels=np.array([int(r[2]) for r in rows]),
        offset=int(rows[0][0]),
    )


def _metric_row(cfg: dict, variant: str, k: int, report: MetricReport) -> str:
    return (
        f"{cfg['dataset']},{variant},{k},{report.vus_pr!r},{report.ap!r},"
        f"{report.precision!r},{report.recall!r},{report.f1!r},{report.u!r},{report.l_buf}"
    )


def cmd_eval(cfg: dict, force: bool = False) -> str:
    variant = variant_name(cfg)
    sdir = _scores_dir(cfg, variant)
    if not os.path.isdir(sdir):
        raise FileNotFoundError(f"missing score directory {sdir!r}; run `f2a predict` first")
    files = sorted(os.listdir(sdir))
    if not files:
        raise FileNotFoundError(f"no score files in {sdir!r}")
    scored = [_read_scores(os.path.join(sdir, f)) for f in files]
    report = pooled_report(scored, cfg["loss.threshold"], cfg["metric.l_buf"])
    path = _metrics_path(cfg)
    _ensure_new([path], force)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(METRICS_HEADER + "\n")
        fh.write(_metric_row(cfg, variant, cfg["k"], report) + "\n")
    print(f"wrote {path} (vus_pr {report.vus_pr:.4f}, ap {report.ap:.4f}, f1 {report.f1:.4f})")
    return path


def cmd_ablate(cfg: dict, force: bool = False) -> str:
    """k sweep {0, 3, 5, 7} plus loss-weight ablations, one combined metric table."""
    prep = _prepare(cfg)
    metrics_path = _metrics_path(cfg)
    _ensure_new([metrics_path], force)
    os.makedirs(cfg["out_dir"], exist_ok=True)

    base_lam, base_psi = cfg["loss.lambda"], cfg["loss.psi"]
    variants: list[tuple[int, float, float]] = [(k, base_lam, base_psi) for k in (0, 3, 5, 7)]
    for lam, psi in ((0.0, base_psi), (base_lam, 1.0)):
        if (3, lam, psi) not in variants:
            variants.append((3, lam, psi))

    store = None
    rows = []
    for k, lam, psi in variants:
        variant = variant_name({"variant": ""}, k=k, lam=lam, psi=psi)
        ckpt = _checkpoint_path(cfg, variant)
        log = _log_path(cfg, variant)
        _ensure_new([ckpt, log], force)
        if k > 0 and store is None:
            # All variants share one seed, so the k=0 run's frozen encoder is
            # bitwise the encoder every later run freezes.
            k0_ckpt = _checkpoint_path(cfg, variant_name({"variant": ""}, k=0, lam=base_lam, psi=base_psi))
            model0 = load_checkpoint(k0_ckpt)
            store = build_store(prep.train_windows + prep.db_windows, BuiltinForecaster(model0.fparams))
            spath = _store_path(cfg)
            _ensure_new([spath], force)
            save_store(store, spath)
            print(f"wrote {spath} ({len(store)} records)")
        result = train(
            prep.train_windows,
            store if k > 0 else None,
            cfg["D"],
            _loss_cfg(cfg, lam=lam, psi=psi),
            _train_cfg(cfg, k=k),
            checkpoint_path=ckpt,
            log_path=log,
        )
        scored = predict_scores(result.model, store if k > 0 else None, prep.eval_sets)
        _write_scores(cfg, variant, prep, scored, force)
        report = pooled_report(scored, cfg["loss.threshold"], cfg["metric.l_buf"])
        rows.append(_metric_row(cfg, variant, k, report))
        print(f"variant {variant}: vus_pr {report.vus_pr:.4f}")

    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(METRICS_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
    print(f"wrote {metrics_path} ({len(rows)} variants)")
    return metrics_path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="f2a",
        description="Retrieval-augmented anomaly prediction over forecast horizons.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "synth": "generate synthetic precursor-anomaly CSV datasets",
        "build-db": "build and persist the retrieval store",
        "train": "pretrain, freeze encoder, and fine-tune one model variant",
        "predict": "score evaluation windows and write stitched score files",
        "eval": "compute the metric report from score files",
        "ablate": "run the k sweep and loss ablations into one metric table",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", required=True, help="preset name (desk, paper) or config file path")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if name == "build-db":
            p.add_argument("--checkpoint", default=None, help="encoder checkpoint to embed with")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.command == "synth":
            cmd_synth(cfg, args.force)
        elif args.command == "build-db":
            cmd_build_db(cfg, args.force, checkpoint=args.checkpoint)
        elif args.command == "train":
            cmd_train(cfg, args.force)
        elif args.command == "predict":
            cmd_predict(cfg, args.force)
        elif args.command == "eval":
            cmd_eval(cfg, args.force)
        elif args.command == "ablate":
            cmd_ablate(cfg, args.force)
    except (
        ConfigError,
        FormatError,
        DimensionError,
        CoverageError,
        FileNotFoundError,
        FileExistsError,
        ValueError,
        RuntimeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
