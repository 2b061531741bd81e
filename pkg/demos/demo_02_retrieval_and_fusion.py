#!/usr/bin/env python3
"""Follow one window through the full forward pass: embed, forecast, query
the retrieval store, aggregate the neighbors, fuse, and score.

Every intermediate is printed with its shape so the wiring between the
stages is visible.
"""

import numpy as np

from f2a import (
    BuiltinForecaster,
    LossConfig,
    SynthConfig,
    TrainConfig,
    build_store,
    f2a_forward,
    gen_synthetic,
    init_fusion_params,
    make_windows,
    query,
    select_channels,
)
from f2a.optim import pretrained_forecaster

cfg = SynthConfig(length=2000, channels=6, anomaly_rate=0.02, precursor_lead=20,
                  spike_magnitude=4.0, noise_std=0.1, seed=3)
series = gen_synthetic(cfg, "demo")
plan = select_channels(series, 4, (0, series.length))
windows = make_windows(series, plan, l_ctx=64, h_horizon=8, stride=8)

# A quick MAE pretrain gives the encoder meaningful embeddings before the
# store is built from them.
tcfg = TrainConfig(epochs=1, batch_size=32, pretrain_epochs=5, seed=0, k=3)
fparams = pretrained_forecaster(windows, d_embed=32, train_cfg=tcfg)
forecaster = BuiltinForecaster(fparams)

store = build_store(windows, forecaster)
print(f"store: {len(store)} records, embedding length {store.embeddings.shape[1]} (C*D)")

# Pick a window whose horizon contains an anomaly and inspect its neighbors.
target = next(w for w in windows[10:] if w.y.any())
emb, x_hat = forecaster.forecast_parts(target.x)
neighbors = query(store, emb, k=4)
print(f"\nquery window {target.origin}, anomaly at horizon offsets {np.nonzero(target.y)[0]}")
print("neighbor starts:", [int(store.starts[i]) for i in neighbors.indices])
print("neighbor distances:", np.round(neighbors.distances, 4))
print("(distance 0 is the window's own record; training drops it, leave-one-out)")

rng = np.random.default_rng(0)
fusion = init_fusion_params(h_horizon=8, c=4, rng=rng)
trace = f2a_forward(target.x, forecaster, store, k=3, params=fusion)
print(f"\nforward trace shapes: x_hat {trace.x_hat.shape}, x_scaled {trace.x_scaled.shape}, "
      f"o_stack {trace.o_stack.shape}, h1 {trace.h1.shape}, x_fused {trace.x_fused.shape}")
print(f"stage-1 weights phi: {trace.phi.shape[0]} entries summing to {trace.phi.sum():.12f}")
print(f"stage-2 skip weights: phi1={trace.phi1:.3f} (base forecast), phi2={trace.phi2:.3f} (retrieved)")
print("anomaly probabilities p:", np.round(trace.p, 3))
print("(untrained fusion: Ws=I and W2=0 make this a pass-through; training moves it)")

# The no-retrieval variant bypasses the store entirely.
trace0 = f2a_forward(target.x, forecaster, store, k=0, params=fusion)
print(f"\nk=0 variant: x_fused == x_scaled is {np.array_equal(trace0.x_fused, trace0.x_scaled)}, "
      f"retrieval fields present: {trace0.o_stack is not None}")

loss_cfg = LossConfig()
from f2a import joint_loss

total, (l_ap, l_f) = joint_loss(trace, target.z, target.y, loss_cfg)
print(f"\njoint loss on this window: total={total:.4f} = focal {l_ap:.4f} + "
      f"lambda {loss_cfg.lam:g} * weighted-MAE {l_f:.4f} (psi={loss_cfg.psi:g})")
