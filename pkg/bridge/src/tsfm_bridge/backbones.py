"""Forecasting backbones behind a small registry.

A backbone turns one normalized context window (L, C) into a per-channel
embedding (C, D) and a forecast (H, C). The two reference backbones are
self-contained and deterministic, so exports byte-reproduce; heavyweight
pretrained models can be added by registering another factory, and each
backbone documents what it treats as "the encoder output" since that choice
is model-spectrumific.
"""

from __future__ import annotations

import numpy as np


class BackboneLoadError(RuntimeError):
    """The requested backbone cannot be constructed."""


class NaiveBackbone:
    """Last-value forecaster.

    Forecast: hold the final context row for all H steps. Embedding: the
    last D values of each channel (the most recent local shape), zero-padded
    on the left when the context is shorter than D.
    """

    name = "naive"

    def __init__(self, l_ctx: int, h_horizon: int, c: int, d: int):
        self.l_ctx, self.h, self.c, self.d = l_ctx, h_horizon, c, d

    def embed(self, x: np.ndarray) -> np.ndarray:
        keep = min(self.d, x.shape[0])
        emb = np.zeros((self.c, self.d))
        emb[:, self.d - keep :] = x[-keep:, :].T
        return emb

    def forecast(self, x: np.ndarray) -> np.ndarray:
        return np.tile(x[-1], (self.h, 1))


class FourierBackbone:
    """Harmonic extrapolation.

    Each channel is fit with its leading rFFT components; the forecast
    evaluates that harmonic sum H steps past the context. The embedding is
    the interleaved real/imaginary parts of the kept coefficients (the
    spectrumtral summary the forecast is generated from), truncated or
    zero-padded to D per channel.
    """

    name = "fourier"

    def __init__(self, l_ctx: int, h_horizon: int, c: int, d: int, n_harmonics: int | None = None):
        self.l_ctx, self.h, self.c, self.d = l_ctx, h_horizon, c, d
        self.n_harmonics = n_harmonics if n_harmonics is not None else max(1, d // 2)

    def _coeffs(self, x: np.ndarray) -> np.ndarray:
        spectrum = np.fft.rfft(x, axis=0)  # (L//2 + 1, C)
        keep = min(self.n_harmonics, spectrum.shape[0])
        return spectrum[:keep]

    def embed(self, x: np.ndarray) -> np.ndarray:
        spectrum = self._coeffs(x)  # (keep, C)
        inter = np.empty((2 * spectrum.shape[0], self.c))
        inter[0::2] = spectrum.real
        inter[1::2] = spectrum.imag
        emb = np.zeros((self.c, self.d))
        keep = min(self.d, inter.shape[0])
        emb[:, :keep] = inter[:keep].T / max(self.l_ctx, 1)
        return emb

    def forecast(self, x: np.ndarray) -> np.ndarray:
        l_ctx = x.shape[0]
        spectrum = self._coeffs(x)
        t = np.arange(l_ctx, l_ctx + self.h)[:, None]  # extrapolation times
        freqs = np.arange(spectrum.shape[0])[None, :]
        basis = np.exp(2j * np.pi * t * freqs / l_ctx)  # (H, keep)
        # Inverse-rFFT synthesis with only the kept terms; DC counts once.
        weights = np.full(spectrum.shape[0], 2.0)
        weights[0] = 1.0
        return (basis @ (weights[:, None] * spectrum)).real / l_ctx


BACKBONES = {
    NaiveBackbone.name: NaiveBackbone,
    FourierBackbone.name: FourierBackbone,
}


def get_backbone(name: str, l_ctx: int, h_horizon: int, c: int, d: int):
    if name not in BACKBONES:
        raise BackboneLoadError(
            f"unknown backbone {name!r}; available: {', '.join(sorted(BACKBONES))}"
        )
    return BACKBONES[name](l_ctx, h_horizon, c, d)
