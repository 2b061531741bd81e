"""Fusion layers: forecast scaling, two-stage retrieval aggregation, skip
fusion, and the anomaly head, with forward and analytic backward passes.

Shapes follow one global convention: an (H, C) block flattens row-major,
timestep-major and channel-minor. Retrieved horizons (k, H, C) stack along
the time axis into a (k*H, C) block whose row r corresponds to horizon
r // H at offset r % H.

Stage 1 softmax-weights all k*H retrieved timesteps jointly and sums them
back into one (H, C) representation. Stage 2 is a learned convex
interpolation between the scaled base forecast and that representation.
The anomaly head maps the flattened fused forecast to per-timestep
probabilities through a clamped sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .forecaster import Embedding

SIGMOID_CLAMP = 36.7  # keeps sigmoid output strictly inside (0, 1) in float64


@dataclass
class FusionParams:
    W1: np.ndarray  # (C, 1)   stage-1 timestep scoring
    W2: np.ndarray  # (H*C, 1) stage-2 skip logits
    Ws: np.ndarray  # (H*C, H*C) forecast scaling
    Wap: np.ndarray  # (H*C, H) anomaly head

    @property
    def hc(self) -> int:
        return self.Ws.shape[0]


@dataclass
class ForwardTrace:
    """Every intermediate of one forward pass, retained for backprop.

    Retrieval fields (o_stack, phi, h1, phi1, phi2, h2) are None when k=0,
    in which case x_fused is x_scaled itself.
    """

    e: Embedding
    x_hat: np.ndarray  # (H, C) base forecast
    x_scaled: np.ndarray  # (H, C)
    o_stack: np.ndarray | None  # (k*H, C)
    phi: np.ndarray | None  # (k*H,) stage-1 weights, sums to 1
    h1: np.ndarray | None  # (H, C)
    phi1: float | None
    phi2: float | None
    h2: np.ndarray | None  # (H, C)
    x_fused: np.ndarray  # (H, C)
    ap_logits: np.ndarray  # (H,) pre-clamp head logits
    p: np.ndarray  # (H,) anomaly probabilities


def init_fusion_params(h_horizon: int, c: int, rng: np.random.Generator) -> FusionParams:
    """Identity/zero starts make the untrained fusion a pass-through of the base forecast."""
    hc = h_horizon * c
    bound = 1.0 / np.sqrt(hc)
    return FusionParams(
        W1=np.zeros((c, 1)),
        W2=np.zeros((hc, 1)),
        Ws=np.eye(hc),
        Wap=rng.uniform(-bound, bound, size=(hc, h_horizon)),
    )


def flatten_tc(m: np.ndarray) -> np.ndarray:
    """Row-major (timestep-major, channel-minor) flattening of an (H, C) block."""
    return np.ascontiguousarray(m).reshape(-1)


def unflatten_tc(v: np.ndarray, h: int, c: int) -> np.ndarray:
    return v.reshape(h, c)


def stable_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    ez = np.exp(z)
    return ez / ez.sum()


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def scale_forecast(x_hat: np.ndarray, Ws: np.ndarray) -> np.ndarray:
    """Learnable global rescaling: unflatten(flatten(x_hat) @ Ws)."""
    h, c = x_hat.shape
    if Ws.shape != (h * c, h * c):
        raise DimensionError(f"Ws shape {Ws.shape} != ({h * c}, {h * c})")
    return unflatten_tc(flatten_tc(x_hat) @ Ws, h, c)


def aggregate_stage1(o: np.ndarray, W1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Softly attend over all k*H retrieved timesteps and sum back to (H, C).

    Returns (h1, phi) where phi is the joint softmax over the k*H scoring
    logits o_stack @ W1 and h1 = sum over the k axis of the phi-weighted
    stacked horizons.
    """
    if o.ndim != 3 or o.shape[0] < 1:
        raise DimensionError(f"retrieved horizons must be (k, H, C) with k >= 1, got {o.shape}")
    k, h, c = o.shape
    if W1.shape != (c, 1):
        raise DimensionError(f"W1 shape {W1.shape} != ({c}, 1)")
    o_stack = o.reshape(k * h, c)
    phi = stable_softmax((o_stack @ W1).reshape(-1))
    weighted = phi[:, None] * o_stack
    h1 = weighted.reshape(k, h, c).sum(axis=0)
    return h1, phi


def fuse_stage2(
    x_scaled: np.ndarray, h1: np.ndarray, W2: np.ndarray
) -> tuple[np.ndarray, float, float]:
    """Adaptive interpolation between the scaled base forecast and h1.

    The two scalar logits are flatten(x_scaled) @ W2 and flatten(h1) @ W2;
    their softmax gives the convex weights (phi1, phi2).
    """
    if x_scaled.shape != h1.shape:
        raise DimensionError(f"shape mismatch: {x_scaled.shape} vs {h1.shape}")
    hc = x_scaled.size
    if W2.shape != (hc, 1):
        raise DimensionError(f"W2 shape {W2.shape} != ({hc}, 1)")
    a = float(flatten_tc(x_scaled) @ W2[:, 0])
    b = float(flatten_tc(h1) @ W2[:, 0])
    w = stable_softmax(np.array([a, b]))
    phi1, phi2 = float(w[0]), float(w[1])
    return phi1 * x_scaled + phi2 * h1, phi1, phi2


def anomaly_head(x_fused: np.ndarray, Wap: np.ndarray) -> np.ndarray:
    """Per-timestep anomaly probabilities sigmoid(flatten(x_fused) @ Wap)."""
    p, _ = _anomaly_head_with_logits(x_fused, Wap)
    return p


def _anomaly_head_with_logits(x_fused: np.ndarray, Wap: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, c = x_fused.shape
    if Wap.shape != (h * c, h):
        raise DimensionError(f"Wap shape {Wap.shape} != ({h * c}, {h})")
    logits = flatten_tc(x_fused) @ Wap
    p = sigmoid(np.clip(logits, -SIGMOID_CLAMP, SIGMOID_CLAMP))
    return p, logits


def forward_from_parts(
    e: Embedding,
    x_hat: np.ndarray,
    o: np.ndarray | None,
    params: FusionParams,
) -> ForwardTrace:
    """Fusion pipeline given precomputed embedding, base forecast, and retrieved horizons.

    ``o`` is the (k, H, C) retrieved stack, or None for the no-retrieval
    variant where the fused forecast is the scaled forecast itself.
    """
    x_scaled = scale_forecast(x_hat, params.Ws)
    if o is None:
        x_fused = x_scaled
        o_stack = phi = h1 = h2 = None
        phi1 = phi2 = None
    else:
        k, h, c = o.shape
        o_stack = o.reshape(k * h, c)
        h1, phi = aggregate_stage1(o, params.W1)
        h2, phi1, phi2 = fuse_stage2(x_scaled, h1, params.W2)
        x_fused = h2
    p, ap_logits = _anomaly_head_with_logits(x_fused, params.Wap)
    return ForwardTrace(
        e=e,
        x_hat=x_hat,
        x_scaled=x_scaled,
        o_stack=o_stack,
        phi=phi,
        h1=h1,
        phi1=phi1,
        phi2=phi2,
        h2=h2,
        x_fused=x_fused,
        ap_logits=ap_logits,
        p=p,
    )


def f2a_forward(
    x: np.ndarray,
    forecaster,
    store,
    k: int,
    params: FusionParams,
    origin: tuple[str, int] | None = None,
) -> ForwardTrace:
    """Full forward pass: embed, forecast, scale, retrieve-and-fuse, score.

    With k=0 the store is never touched and the trace carries no retrieval
    fields; with k >= 1 the store is queried with the same embedding that
    produced the base forecast.
    """
    emb, x_hat = forecaster.forecast_parts(x, origin=origin)
    if k == 0:
        o = None
    else:
        from .retrieval import query

        o = query(store, emb, k).horizons
    return forward_from_parts(emb, x_hat, o, params)


def f2a_backward(
    trace: ForwardTrace,
    d_p: np.ndarray,
    d_x_fused: np.ndarray,
    params: FusionParams,
    fparams=None,
    d_x_base: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Analytic gradients of a scalar loss through the fusion pipeline.

    ``d_p`` and ``d_x_fused`` are the loss gradients w.r.t. the probability
    vector and the fused forecast; ``d_x_base`` optionally adds a direct
    gradient on the raw base forecast (used when the forecast loss targets
    the pre-fusion output). Returns gradients for Ws, W1, W2, Wap, and,
    when ``fparams`` is given, the decoder weights. Encoder gradients are
    never produced; the encoder is frozen during fusion training.
    """
    h, c = trace.x_fused.shape
    hc = h * c
    xf_flat = flatten_tc(trace.x_fused)

    # Anomaly head. The sigmoid ran on clamped logits, so gradient is zero
    # where the clamp was active.
    sig_grad = trace.p * (1.0 - trace.p)
    active = np.abs(trace.ap_logits) < SIGMOID_CLAMP
    d_logit_ap = d_p * sig_grad * active
    d_Wap = np.outer(xf_flat, d_logit_ap)
    d_xf_flat = flatten_tc(d_x_fused) + params.Wap @ d_logit_ap

    if trace.o_stack is not None:
        d_h2 = unflatten_tc(d_xf_flat, h, c)
        d_phi1 = float(np.sum(d_h2 * trace.x_scaled))
        d_phi2 = float(np.sum(d_h2 * trace.h1))
        # 2-way softmax Jacobian collapses to a single antisymmetric term.
        d_a = trace.phi1 * trace.phi2 * (d_phi1 - d_phi2)
        d_b = -d_a
        xs_flat = flatten_tc(trace.x_scaled)
        h1_flat = flatten_tc(trace.h1)
        d_W2 = (xs_flat * d_a + h1_flat * d_b)[:, None]
        d_xs_flat = trace.phi1 * flatten_tc(d_h2) + d_a * params.W2[:, 0]
        d_h1 = trace.phi2 * d_h2 + unflatten_tc(d_b * params.W2[:, 0], h, c)

        k = trace.o_stack.shape[0] // h
        d_h1_tiled = np.tile(d_h1, (k, 1))
        d_phi = np.sum(d_h1_tiled * trace.o_stack, axis=1)
        d_logits1 = trace.phi * (d_phi - float(trace.phi @ d_phi))
        d_W1 = (trace.o_stack.T @ d_logits1)[:, None]
    else:
        d_xs_flat = d_xf_flat
        d_W1 = np.zeros_like(params.W1)
        d_W2 = np.zeros_like(params.W2)

    xh_flat = flatten_tc(trace.x_hat)
    d_Ws = np.outer(xh_flat, d_xs_flat)
    d_x_hat = unflatten_tc(params.Ws @ d_xs_flat, h, c)
    if d_x_base is not None:
        d_x_hat = d_x_hat + d_x_base

    grads = {"Ws": d_Ws, "W1": d_W1, "W2": d_W2, "Wap": d_Wap}
    if fparams is not None:
        grads["W_dec"] = np.einsum("cd,hc->dh", trace.e.e, d_x_hat)
        grads["b_dec"] = d_x_hat.sum(axis=1)
    return grads


def forecaster_backward(
    x: np.ndarray, e: Embedding, d_x_hat: np.ndarray, W_dec: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of a loss on the base forecast through decoder AND encoder.

    Used only for forecaster pretraining, before the encoder is frozen.
    """
    d_W_dec = np.einsum("cd,hc->dh", e.e, d_x_hat)
    d_b_dec = d_x_hat.sum(axis=1)
    d_e = np.einsum("hc,dh->cd", d_x_hat, W_dec)
    d_u = d_e * (1.0 - e.e * e.e)
    return {
        "W_dec": d_W_dec,
        "b_dec": d_b_dec,
        "W_enc": np.einsum("lc,cd->ld", x, d_u),
        "b_enc": d_u.sum(axis=0),
    }
