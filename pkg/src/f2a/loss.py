"""Joint anomaly-forecast objective.

Total loss per window = focal classification loss over the horizon plus
lambda times an anomaly-upweighted mean absolute forecast error. The
forecast term defaults to the fused (post-retrieval) forecast; a config
switch can point it at the raw base forecast instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import ForwardTrace


@dataclass
class LossConfig:
    lam: float = 1.0  # forecast-loss weight
    psi: float = 3.0  # anomaly upweight on forecast error
    alpha: float = 0.25  # focal balance
    gamma: float = 2.0  # focal exponent
    threshold: float = 0.5  # u, used only for thresholded reporting
    eps_p: float = 1e-7  # probability clamp before logs
    forecast_target: str = "fused"  # "fused" or "base"

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.psi < 1:
            raise ValueError("psi must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must be in (0, 1)")
        if self.forecast_target not in ("fused", "base"):
            raise ValueError(f"forecast_target must be 'fused' or 'base', got {self.forecast_target!r}")


def focal_loss(p: np.ndarray, y: np.ndarray, cfg: LossConfig) -> float:
    """Focal binary loss summed over the horizon.

    sum_t [ -alpha * y_t * (1-p_t)^gamma * ln p_t
            - (1-alpha) * (1-y_t) * p_t^gamma * ln(1-p_t) ]
    with p clamped to [eps_p, 1-eps_p] before the logs.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: p {p.shape} vs y {y.shape}")
    pc = np.clip(p, cfg.eps_p, 1.0 - cfg.eps_p)
    pos = -cfg.alpha * y * (1.0 - pc) ** cfg.gamma * np.log(pc)
    neg = -(1.0 - cfg.alpha) * (1.0 - y) * pc**cfg.gamma * np.log(1.0 - pc)
    return float(np.sum(pos + neg))


def focal_loss_grad(p: np.ndarray, y: np.ndarray, cfg: LossConfig) -> np.ndarray:
    """d focal / d p, elementwise; zero where the probability clamp is active."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pc = np.clip(p, cfg.eps_p, 1.0 - cfg.eps_p)
    a, g = cfg.alpha, cfg.gamma
    # d/dp of the positive-class term, then the negative-class term.
    if g == 0:
        d_pos = -a / pc
        d_neg = (1.0 - a) / (1.0 - pc)
    else:
        d_pos = a * g * (1.0 - pc) ** (g - 1.0) * np.log(pc) - a * (1.0 - pc) ** g / pc
        d_neg = -(1.0 - a) * g * pc ** (g - 1.0) * np.log(1.0 - pc) + (1.0 - a) * pc**g / (1.0 - pc)
    grad = y * d_pos + (1.0 - y) * d_neg
    active = (p > cfg.eps_p) & (p < 1.0 - cfg.eps_p)
    return grad * active


def weighted_mae(x_hat: np.ndarray, z: np.ndarray, y: np.ndarray, psi: float) -> float:
    """(1/H) sum_t m_t sum_c |x_hat - z| with m_t = psi at labeled timesteps, else 1."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x_hat.shape != z.shape:
        raise ValueError(f"shape mismatch: {x_hat.shape} vs {z.shape}")
    h = x_hat.shape[0]
    m = np.where(np.asarray(y) == 0, 1.0, psi)
    return float(np.sum(m * np.sum(np.abs(x_hat - z), axis=1)) / h)


def weighted_mae_grad(x_hat: np.ndarray, z: np.ndarray, y: np.ndarray, psi: float) -> np.ndarray:
    """d weighted_mae / d x_hat; sign convention gives 0 at exact matches."""
    h = x_hat.shape[0]
    m = np.where(np.asarray(y) == 0, 1.0, psi)
    return m[:, None] * np.sign(x_hat - z) / h


def joint_loss(
    trace: ForwardTrace, z: np.ndarray, y: np.ndarray, cfg: LossConfig
) -> tuple[float, tuple[float, float]]:
    """Total = focal(p, y) + lambda * weighted_mae(target forecast, z, y).

    Returns (total, (l_ap, l_f)) with the forecast part reported pre-lambda.
    """
    target = trace.x_fused if cfg.forecast_target == "fused" else trace.x_hat
    l_ap = focal_loss(trace.p, y, cfg)
    l_f = weighted_mae(target, z, y, cfg.psi)
    return l_ap + cfg.lam * l_f, (l_ap, l_f)


def joint_loss_grads(
    trace: ForwardTrace, z: np.ndarray, y: np.ndarray, cfg: LossConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Gradients of the joint loss w.r.t. (p, x_fused, x_base).

    The third entry is None unless the forecast loss targets the raw base
    forecast, in which case the fused-forecast gradient carries only the
    head contribution (which f2a_backward adds itself from d_p).
    """
    d_p = focal_loss_grad(trace.p, y, cfg)
    if cfg.forecast_target == "fused":
        d_xf = cfg.lam * weighted_mae_grad(trace.x_fused, z, y, cfg.psi)
        return d_p, d_xf, None
    d_xb = cfg.lam * weighted_mae_grad(trace.x_hat, z, y, cfg.psi)
    return d_p, np.zeros_like(trace.x_fused), d_xb


def threshold_labels(p: np.ndarray, u: float) -> np.ndarray:
    """Binary labels via strict comparison: 1 iff p_t > u."""
    return (np.asarray(p) > u).astype(np.int64)
