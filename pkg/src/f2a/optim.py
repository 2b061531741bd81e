"""Training: forecaster pretraining, encoder freezing, joint fine-tuning with
a decoupled-weight-decay adaptive optimizer and a cosine learning-rate
schedule, plus F1 threshold calibration.

Stage A pretrains encoder and decoder on plain MAE so the embeddings mean
something before they are frozen. Stage B freezes the encoder, initializes
the fusion layers, and fine-tunes decoder plus fusion weights on the joint
loss. Both stages shuffle with dedicated seeded generators and reduce batch
gradients in a fixed order, so a (seed, config, data) triple fully
determines the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import TrainedModel, save_checkpoint
from .dataset import WindowSample
from .forecaster import (
    BuiltinForecaster,
    ForecasterParams,
    decode,
    encode,
    encoder_checksum,
    init_forecaster_params,
)
from .fusion import (
    f2a_backward,
    forecaster_backward,
    forward_from_parts,
    init_fusion_params,
)
from .loss import LossConfig, joint_loss, joint_loss_grads, weighted_mae, weighted_mae_grad
from .retrieval import RetrievalStore, query


@dataclass
class TrainConfig:
    lr_max: float = 0.001
    lr_min: float = 0.0
    epochs: int = 50
    batch_size: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    weight_decay: float = 0.01
    pretrain_epochs: int = 10
    seed: int = 0
    k: int = 3

    def __post_init__(self) -> None:
        if not self.lr_max > self.lr_min >= 0:
            raise ValueError("need lr_max > lr_min >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.k < 0:
            raise ValueError("k must be >= 0")


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


@dataclass
class TrainResult:
    model: TrainedModel
    log_rows: list[tuple[int, float, float, float, float]]  # epoch, lr, total, ap, f


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """lr_min + 0.5 (lr_max - lr_min) (1 + cos(pi * epoch / epochs))."""
    if not 0 <= epoch <= cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs}]")
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * epoch / cfg.epochs))


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    cfg: TrainConfig,
    frozen: frozenset[str] = frozenset(),
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One decoupled-weight-decay adaptive update, in place; frozen names untouched."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, p in params.items():
        if name in frozen or name not in grads:
            continue
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise RuntimeError(f"non-finite gradient for parameter {name!r} at step {t}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps_opt)
        if cfg.weight_decay:
            p -= lr * cfg.weight_decay * p
    return params, state


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo : lo + batch_size]


def _pretrain(
    windows: list[WindowSample],
    fparams: ForecasterParams,
    cfg: TrainConfig,
    rng: np.random.Generator,
    log_rows: list,
) -> None:
    """Stage A: plain-MAE pretraining of encoder + decoder at a fixed lr_max."""
    params = {
        "W_enc": fparams.W_enc,
        "b_enc": fparams.b_enc,
        "W_dec": fparams.W_dec,
        "b_dec": fparams.b_dec,
    }
    state = OptimizerState()
    no_anom = np.zeros(windows[0].y.shape[0], dtype=np.int64)
    for epoch in range(cfg.pretrain_epochs):
        total_sum = 0.0
        for bi, idx in enumerate(_batches(len(windows), cfg.batch_size, rng)):
            acc = {name: np.zeros_like(p) for name, p in params.items()}
            for i in idx:
                w = windows[i]
                emb = encode(w.x, fparams)
                x_hat = decode(emb, fparams)
                loss = weighted_mae(x_hat, w.z, no_anom, 1.0)
                if not math.isfinite(loss):
                    raise RuntimeError(f"non-finite loss at pretrain epoch {epoch} batch {bi}")
                total_sum += loss
                g = forecaster_backward(w.x, emb, weighted_mae_grad(x_hat, w.z, no_anom, 1.0), fparams.W_dec)
                for name in acc:
                    acc[name] += g[name]
            for name in acc:
                acc[name] /= len(idx)
            optimizer_step(params, acc, state, cfg.lr_max, cfg)
        mean = total_sum / len(windows)
        log_rows.append((epoch, cfg.lr_max, mean, 0.0, mean))


def pretrained_forecaster(
    windows: list[WindowSample],
    d_embed: int,
    train_cfg: TrainConfig,
    log_rows: list | None = None,
) -> ForecasterParams:
    """Run stage A standalone and return the frozen forecaster.

    Uses exactly the generator streams train() would, so a store built from
    this encoder matches any train() run with the same seed and config.
    """
    if not windows:
        raise ValueError("no training windows")
    l_ctx, _ = windows[0].x.shape
    h = windows[0].z.shape[0]
    ss = np.random.SeedSequence(train_cfg.seed)
    rng_init_f, _, rng_a, _ = (np.random.default_rng(s) for s in ss.spawn(4))
    fparams = init_forecaster_params(l_ctx, d_embed, h, rng_init_f)
    if train_cfg.pretrain_epochs > 0:
        _pretrain(windows, fparams, train_cfg, rng_a, log_rows if log_rows is not None else [])
    fparams.encoder_frozen = True
    return fparams


def train(
    windows: list[WindowSample],
    store: RetrievalStore | None,
    d_embed: int,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    checkpoint_path=None,
    log_path=None,
    external=None,
    pretrained: ForecasterParams | None = None,
) -> TrainResult:
    """Two-stage training over prepared windows.

    ``store`` may be None only when k=0. When ``external`` (an
    ExternalForecaster) is given, stage A is skipped and the decoder is not
    trained; only the fusion layers learn. ``pretrained`` skips stage A and
    fine-tunes a copy of the given forecaster instead.
    """
    if not windows:
        raise ValueError("no training windows")
    k = train_cfg.k
    if k > 0 and store is None:
        raise ValueError("k > 0 requires a retrieval store")
    if k > 0 and k + 1 > len(store):
        raise ValueError(
            f"k={k} needs a store of more than k records for leave-one-out training, got {len(store)}"
        )
    l_ctx, c = windows[0].x.shape
    h = windows[0].z.shape[0]

    ss = np.random.SeedSequence(train_cfg.seed)
    rng_init_f, rng_init_fu, rng_a, rng_b = (np.random.default_rng(s) for s in ss.spawn(4))

    log_rows: list[tuple[int, float, float, float, float]] = []

    if external is not None:
        fparams = None
        frozen_sum = None
        forecaster = external
    elif pretrained is not None:
        fparams = ForecasterParams(
            W_enc=pretrained.W_enc.copy(),
            b_enc=pretrained.b_enc.copy(),
            W_dec=pretrained.W_dec.copy(),
            b_dec=pretrained.b_dec.copy(),
            encoder_frozen=True,
        )
        frozen_sum = encoder_checksum(fparams)
        forecaster = BuiltinForecaster(fparams)
    else:
        fparams = init_forecaster_params(l_ctx, d_embed, h, rng_init_f)
        if train_cfg.pretrain_epochs > 0:
            _pretrain(windows, fparams, train_cfg, rng_a, log_rows)
        fparams.encoder_frozen = True
        frozen_sum = encoder_checksum(fparams)
        forecaster = BuiltinForecaster(fparams)

    fusion = init_fusion_params(h, c, rng_init_fu)

    # The encoder is frozen from here on, so per-window embeddings, base
    # forecast lookups, and retrieved horizons are constant across stage B.
    # Retrieval is leave-one-out: a training window whose own record sits in
    # the store would otherwise retrieve its true horizon at distance zero
    # and teach the fusion to trust an oracle that never exists at inference.
    cached = []
    for w in windows:
        emb, ext_xhat = forecaster.forecast_parts(w.x, origin=w.origin)
        o = None
        if k > 0:
            res = query(store, emb, k + 1)
            keep = [
                i
                for i in range(k + 1)
                if not (
                    store.names[res.indices[i]] == w.origin[0]
                    and store.starts[res.indices[i]] == w.origin[1]
                )
            ]
            o = res.horizons[keep[:k]]
        cached.append((emb, o, ext_xhat if external is not None else None))

    params: dict[str, np.ndarray] = {
        "Ws": fusion.Ws,
        "W1": fusion.W1,
        "W2": fusion.W2,
        "Wap": fusion.Wap,
    }
    if fparams is not None:
        params["W_dec"] = fparams.W_dec
        params["b_dec"] = fparams.b_dec
    state = OptimizerState()
    epoch_base = len(log_rows)

    for epoch in range(train_cfg.epochs):
        lr = cosine_lr(epoch, train_cfg)
        sums = np.zeros(3)
        for bi, idx in enumerate(_batches(len(windows), train_cfg.batch_size, rng_b)):
            acc = {name: np.zeros_like(p) for name, p in params.items()}
            for i in idx:
                w = windows[i]
                emb, o, ext_xhat = cached[i]
                x_hat = ext_xhat if ext_xhat is not None else decode(emb, fparams)
                trace = forward_from_parts(emb, x_hat, o, fusion)
                total, (l_ap, l_f) = joint_loss(trace, w.z, w.y, loss_cfg)
                if not math.isfinite(total):
                    raise RuntimeError(f"non-finite loss at epoch {epoch} batch {bi}")
                sums += (total, l_ap, l_f)
                d_p, d_xf, d_xb = joint_loss_grads(trace, w.z, w.y, loss_cfg)
                g = f2a_backward(trace, d_p, d_xf, fusion, fparams=fparams, d_x_base=d_xb)
                for name in acc:
                    acc[name] += g[name]
            for name in acc:
                acc[name] /= len(idx)
            optimizer_step(params, acc, state, lr, train_cfg)
        n = len(windows)
        log_rows.append((epoch_base + epoch, lr, sums[0] / n, sums[1] / n, sums[2] / n))

    if fparams is not None and encoder_checksum(fparams) != frozen_sum:
        raise RuntimeError("encoder freeze contract violated: weights changed during fine-tuning")

    model = TrainedModel(fparams=fparams, fusion=fusion, k=k)
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for row in log_rows:
                fh.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r},{row[4]!r}\n")
    if checkpoint_path is not None:
        if fparams is None:
            raise ValueError("cannot checkpoint an externally-forecast model (no decoder weights)")
        save_checkpoint(checkpoint_path, model)
    return TrainResult(model=model, log_rows=log_rows)


def calibrate_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """F1-maximizing threshold over midpoints of consecutive unique scores.

    Ties in F1 resolve to the smallest midpoint. With a single unique score
    there is no midpoint to sweep, so the default 0.5 comes back.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = int(labels.sum())
    if pos == 0 or pos == labels.size:
        raise ValueError("calibration needs at least one positive and one negative label")
    uniq = np.unique(scores)
    if uniq.size < 2:
        return 0.5
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    best_u, best_f1 = float(mids[0]), -1.0
    for u in mids:
        pred = scores > u
        tp = int(np.sum(pred & (labels == 1)))
        fp = int(np.sum(pred & (labels == 0)))
        fn = pos - tp
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        if f1 > best_f1:
            best_f1, best_u = f1, float(u)
    return best_u
