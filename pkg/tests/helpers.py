"""Shared test fixtures and independent oracles.

Oracles here deliberately avoid the library's code paths: plain Python
loops and direct formula transcriptions, so agreement is evidence rather
than tautology.
"""

from __future__ import annotations

import numpy as np

from f2a.dataset import WindowSample
from f2a.forecaster import BuiltinForecaster, init_forecaster_params
from f2a.fusion import f2a_forward, init_fusion_params
from f2a.loss import joint_loss, joint_loss_grads
from f2a.fusion import f2a_backward
from f2a.retrieval import build_store


def random_instance(rng, l_ctx=5, c=2, d=3, h=4, store_size=6):
    """Random small forecaster + fusion params + store + one labeled window."""
    fparams = init_forecaster_params(l_ctx, d, h, rng)
    fparams.W_enc += rng.normal(scale=0.3, size=fparams.W_enc.shape)
    fparams.b_enc += rng.normal(scale=0.1, size=fparams.b_enc.shape)
    fparams.W_dec += rng.normal(scale=0.3, size=fparams.W_dec.shape)
    fparams.b_dec += rng.normal(scale=0.1, size=fparams.b_dec.shape)
    fusion = init_fusion_params(h, c, rng)
    fusion.Ws += rng.normal(scale=0.2, size=fusion.Ws.shape)
    fusion.W1 += rng.normal(scale=0.5, size=fusion.W1.shape)
    fusion.W2 += rng.normal(scale=0.5, size=fusion.W2.shape)
    store = None
    if store_size:
        wins = [
            WindowSample(
                x=rng.normal(size=(l_ctx, c)),
                z=rng.normal(size=(h, c)),
                y=(rng.random(h) < 0.3).astype(np.int64),
                origin=("s", i),
            )
            for i in range(store_size)
        ]
        store = build_store(wins, BuiltinForecaster(fparams))
    x = rng.normal(size=(l_ctx, c))
    z = rng.normal(size=(h, c))
    y = (rng.random(h) < 0.4).astype(np.int64)
    return fparams, fusion, store, x, z, y


def max_grad_rel_err(fparams, fusion, store, x, z, y, loss_cfg, k, step=1e-5):
    """Max relative error of analytic vs central finite-difference gradients.

    The embedding and the retrieved horizons are constant under the frozen
    encoder, so they are computed once and the finite-difference loop only
    replays the trainable part of the forward pass. Relative error uses
    max(|analytic|, |fd|, 1e-3) as denominator so tiny gradients compare on
    an absolute scale.
    """
    from f2a.forecaster import decode, encode
    from f2a.fusion import forward_from_parts
    from f2a.retrieval import query

    emb = encode(x, fparams)
    o = query(store, emb, k).horizons if k > 0 else None

    def loss_value():
        trace = forward_from_parts(emb, decode(emb, fparams), o, fusion)
        return joint_loss(trace, z, y, loss_cfg)[0]

    trace = forward_from_parts(emb, decode(emb, fparams), o, fusion)
    assert np.array_equal(trace.p, f2a_forward(x, BuiltinForecaster(fparams), store, k, fusion).p)
    d_p, d_xf, d_xb = joint_loss_grads(trace, z, y, loss_cfg)
    grads = f2a_backward(trace, d_p, d_xf, fusion, fparams=fparams, d_x_base=d_xb)

    arrays = {
        "Ws": fusion.Ws,
        "W1": fusion.W1,
        "W2": fusion.W2,
        "Wap": fusion.Wap,
        "W_dec": fparams.W_dec,
        "b_dec": fparams.b_dec,
    }
    worst = 0.0
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            lp = loss_value()
            flat[i] = old - step
            lm = loss_value()
            flat[i] = old
            fd = (lp - lm) / (2.0 * step)
            an = gflat[i]
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-3))
    return worst


def ap_brute_force(scores: np.ndarray, labels: np.ndarray) -> float:
    """AP via an explicit descending threshold sweep (predict score >= thr)."""
    n_pos = int(labels.sum())
    ap = 0.0
    prev_recall = 0.0
    for thr in sorted(set(float(v) for v in scores), reverse=True):
        pred = scores >= thr
        tp = int(np.sum(pred & (labels == 1)))
        fp = int(np.sum(pred & (labels == 0)))
        precision = tp / (tp + fp)
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def knn_brute_force(embeddings: np.ndarray, q: np.ndarray, k: int):
    """Exact top-k by (distance, index) sort over every record."""
    dists = [float(np.sqrt(np.sum((embeddings[i] - q) ** 2))) for i in range(embeddings.shape[0])]
    order = sorted(range(len(dists)), key=lambda i: (dists[i], i))[:k]
    return order, [dists[i] for i in order]


def stage1_oracle(o: np.ndarray, w1: np.ndarray):
    """Loop transcription of the stage-1 aggregation formulas."""
    k, h, c = o.shape
    logits = []
    for q in range(k):
        for t in range(h):
            logits.append(sum(o[q, t, ch] * w1[ch, 0] for ch in range(c)))
    logits = np.array(logits)
    ez = np.exp(logits - logits.max())
    phi = ez / ez.sum()
    h1 = np.zeros((h, c))
    for q in range(k):
        for t in range(h):
            h1[t] += phi[q * h + t] * o[q, t]
    return h1, phi
