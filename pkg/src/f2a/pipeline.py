"""End-to-end experiment plumbing shared by the CLI and the demos.

Splits raw series into training windows, store-coverage windows, and held
out evaluation windows, then runs one model variant through training,
prediction, stitching, and metric reporting. The retrieval store covers
the training split plus an optional leading fraction of the test split;
evaluation is restricted to the remaining test windows so nothing scored
was ever visible to the store.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import TrainedModel
from .dataset import RawSeries, WindowSample, make_windows, select_channels
from .forecaster import BuiltinForecaster, decode, encode
from .fusion import forward_from_parts
from .loss import LossConfig
from .metrics import MetricReport, ScoredSeries, pooled_report, stitch_scores
from .optim import TrainConfig, TrainResult, pretrained_forecaster, train
from .retrieval import RetrievalStore, build_store, query


@dataclass
class EvalSet:
    series: RawSeries
    windows: list[WindowSample]


@dataclass
class PreparedData:
    train_windows: list[WindowSample]
    db_windows: list[WindowSample]
    eval_sets: list[EvalSet]


@dataclass
class VariantResult:
    model: TrainedModel
    store: RetrievalStore | None
    scored: list[ScoredSeries]
    report: MetricReport
    train_result: TrainResult


def prepare_data(
    train_series: list[RawSeries],
    test_series: list[RawSeries],
    c: int,
    l_ctx: int,
    h_horizon: int,
    stride: int,
    db_test_fraction: float,
    test_fit_fraction: float = 0.3,
) -> PreparedData:
    """Window all series and carve out the store/evaluation split.

    Channel plans and normalization stats come from the full range of each
    training series, but only from the leading ``test_fit_fraction`` of each
    test series (the same region the store may cover), so evaluation data
    never leaks into preprocessing.
    """
    if not 0.0 <= db_test_fraction < 1.0:
        raise ValueError(f"db_test_fraction must be in [0, 1), got {db_test_fraction}")
    train_windows: list[WindowSample] = []
    for s in train_series:
        plan = select_channels(s, c, (0, s.length))
        train_windows.extend(make_windows(s, plan, l_ctx, h_horizon, stride))
    db_windows: list[WindowSample] = []
    eval_sets: list[EvalSet] = []
    for s in test_series:
        fit_hi = max(2, int(round(test_fit_fraction * s.length)))
        plan = select_channels(s, c, (0, min(fit_hi, s.length)))
        windows = make_windows(s, plan, l_ctx, h_horizon, stride)
        n_db = int(np.floor(db_test_fraction * len(windows)))
        db_windows.extend(windows[:n_db])
        eval_sets.append(EvalSet(series=s, windows=windows[n_db:]))
    if not train_windows:
        raise ValueError("training split produced no windows")
    if any(not es.windows for es in eval_sets):
        raise ValueError("a test series has no evaluation windows left after the store split")
    return PreparedData(train_windows=train_windows, db_windows=db_windows, eval_sets=eval_sets)


def predict_scores(
    model: TrainedModel, store: RetrievalStore | None, eval_sets: list[EvalSet]
) -> list[ScoredSeries]:
    """Score every evaluation window and stitch per-series score streams."""
    forecaster = BuiltinForecaster(model.fparams)
    scored = []
    for es in eval_sets:
        preds = np.empty((len(es.windows), es.windows[0].y.shape[0]))
        starts = np.empty(len(es.windows), dtype=np.int64)
        for i, w in enumerate(es.windows):
            emb = encode(w.x, model.fparams)
            x_hat = decode(emb, model.fparams)
            o = query(store, emb, model.k).horizons if model.k > 0 else None
            trace = forward_from_parts(emb, x_hat, o, model.fusion)
            preds[i] = trace.p
            starts[i] = w.origin[1]
        l_ctx = es.windows[0].x.shape[0]
        scored.append(stitch_scores(preds, starts, es.series.labels, l_ctx))
    return scored


def run_variant(
    prep: PreparedData,
    d_embed: int,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    l_buf: int,
    store: RetrievalStore | None = None,
    encoder_source=None,
) -> VariantResult:
    """Train one variant and evaluate it on the held out windows.

    When no store is supplied and k > 0, one is built from the training plus
    coverage windows using a stage-A forecaster reproduced from the same
    seed, which is exactly the encoder the subsequent training run freezes.
    """
    fparams0 = encoder_source
    if train_cfg.k > 0 and store is None:
        if fparams0 is None:
            fparams0 = pretrained_forecaster(prep.train_windows, d_embed, train_cfg)
        store = build_store(prep.train_windows + prep.db_windows, BuiltinForecaster(fparams0))
    result = train(
        prep.train_windows,
        store,
        d_embed,
        loss_cfg,
        train_cfg,
        pretrained=fparams0,
    )
    scored = predict_scores(result.model, store, prep.eval_sets)
    report = pooled_report(scored, loss_cfg.threshold, l_buf)
    return VariantResult(
        model=result.model, store=store, scored=scored, report=report, train_result=result
    )


def base_rate(scored: list[ScoredSeries]) -> float:
    labels = np.concatenate([s.labels for s in scored])
    return float(labels.mean())
