"""Raw series ingestion, channel selection, windowing, and synthetic data.

A raw labeled multivariate series is reduced to a fixed channel count,
z-score normalized, and cut into (context, horizon, labels) windows. The
synthetic generator produces series whose anomalies are announced by a
precursor ramp on a side channel, so a desk-scale model can actually learn
to predict them from context alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

EPS_NORM = 1e-8


@dataclass
class RawSeries:
    """A labeled multivariate series: values (T, C_raw), binary labels (T,)."""

    values: np.ndarray
    labels: np.ndarray
    name: str

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2:
            raise DimensionError(f"series {self.name!r}: values must be 2-D (T, C), got {self.values.shape}")
        t, c = self.values.shape
        if t < 1 or c < 1:
            raise DimensionError(f"series {self.name!r}: need T >= 1 and C >= 1, got {self.values.shape}")
        if self.labels.shape != (t,):
            raise DimensionError(
                f"series {self.name!r}: labels length {self.labels.shape} does not match T={t}"
            )
        bad = set(np.unique(self.labels)) - {0, 1}
        if bad:
            raise ValueError(f"series {self.name!r}: labels must be 0/1, found {sorted(bad)}")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass
class ChannelPlan:
    """Channel subset plus normalization statistics for one series.

    ``selected`` holds source channel indices ranked by the variance of the
    first-order differenced signal (descending, ties by ascending index).
    ``pad_count`` zero channels are appended when the source has fewer
    channels than the target width. Mean/std are per output channel,
    computed on the raw (undifferenced) values over the fit range; padded
    channels carry (0, 1) so normalization is a no-op there.
    """

    selected: list[int]
    pad_count: int
    per_channel_mean: np.ndarray
    per_channel_std: np.ndarray

    @property
    def width(self) -> int:
        return len(self.selected) + self.pad_count

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Select, pad, and z-score a (T, C_raw) matrix into (T, width)."""
        t = values.shape[0]
        out = np.zeros((t, self.width), dtype=np.float64)
        if self.selected:
            sel = values[:, self.selected]
            n = len(self.selected)
            out[:, :n] = (sel - self.per_channel_mean[:n]) / self.per_channel_std[:n]
        return out

    def invert(self, normalized: np.ndarray) -> np.ndarray:
        """Undo z-scoring on the selected (non-padded) columns."""
        n = len(self.selected)
        return normalized[:, :n] * self.per_channel_std[:n] + self.per_channel_mean[:n]


@dataclass
class WindowSample:
    """One training/eval unit: context x (L, C), horizon z (H, C), labels y (H,)."""

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    origin: tuple[str, int]


@dataclass
class SynthConfig:
    num_series: int = 1
    length: int = 3000
    channels: int = 4
    anomaly_rate: float = 0.02
    precursor_lead: int = 12
    spike_magnitude: float = 8.0
    noise_std: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_series < 1:
            raise ValueError("num_series must be >= 1")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.channels < 2:
            raise ValueError("need >= 2 channels (one spike channel, one precursor channel)")
        if not 0.0 < self.anomaly_rate < 0.5:
            raise ValueError(f"anomaly_rate must be in (0, 0.5), got {self.anomaly_rate}")
        if self.precursor_lead < 1:
            raise ValueError("precursor_lead must be >= 1")
        if self.precursor_lead >= self.length:
            raise ValueError("precursor_lead must be smaller than the series length")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def select_channels(series: RawSeries, c_target: int, fit_range: tuple[int, int]) -> ChannelPlan:
    """Rank channels by diff-variance over ``fit_range`` and build a ChannelPlan.

    Channels are scored by the variance of their first-order differences
    computed over the fit range only, then the top ``c_target`` are kept
    (descending score, ties broken by ascending source index). Normalization
    statistics come from the raw selected channels over the same range;
    stds are clamped to ``EPS_NORM`` so constant channels normalize to zero.
    """
    if c_target < 1:
        raise ValueError("c_target must be >= 1")
    lo, hi = int(fit_range[0]), int(fit_range[1])
    if not (0 <= lo < hi <= series.length):
        raise ValueError(f"fit_range ({lo}, {hi}) empty or outside [0, {series.length})")
    seg = series.values[lo:hi]
    if seg.shape[0] >= 2:
        dv = np.var(np.diff(seg, axis=0), axis=0)
    else:
        dv = np.zeros(series.n_channels)
    order = np.argsort(-dv, kind="stable")
    keep = min(c_target, series.n_channels)
    selected = [int(i) for i in order[:keep]]
    pad_count = max(0, c_target - series.n_channels)

    mean = np.zeros(c_target, dtype=np.float64)
    std = np.ones(c_target, dtype=np.float64)
    mean[:keep] = seg[:, selected].mean(axis=0)
    std[:keep] = np.maximum(seg[:, selected].std(axis=0), EPS_NORM)
    return ChannelPlan(selected=selected, pad_count=pad_count, per_channel_mean=mean, per_channel_std=std)


def make_windows(
    series: RawSeries, plan: ChannelPlan, l_ctx: int, h_horizon: int, stride: int
) -> list[WindowSample]:
    """Cut a series into windows starting at 0, stride, 2*stride, ...

    A window is emitted only when both its full context and full horizon fit
    inside the series; no partial windows, no padded horizons. Context and
    horizon values are normalized per the plan; y is the raw label slice
    over the horizon.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    t = series.length
    if l_ctx + h_horizon > t:
        raise ValueError(
            f"series {series.name!r} too short: L + H = {l_ctx + h_horizon} exceeds T = {t}"
        )
    normalized = plan.apply(series.values)
    out: list[WindowSample] = []
    for start in range(0, t - l_ctx - h_horizon + 1, stride):
        x = normalized[start : start + l_ctx]
        z = normalized[start + l_ctx : start + l_ctx + h_horizon]
        y = series.labels[start + l_ctx : start + l_ctx + h_horizon]
        out.append(WindowSample(x=x.copy(), z=z.copy(), y=y.copy(), origin=(series.name, start)))
    return out


def _base_signal(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-channel sinusoids with random period/phase plus Gaussian noise."""
    t = np.arange(config.length, dtype=np.float64)
    periods = rng.uniform(20.0, 80.0, size=config.channels)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=config.channels)
    base = np.sin(2.0 * np.pi * t[:, None] / periods[None, :] + phases[None, :])
    if config.noise_std > 0:
        base = base + rng.normal(0.0, config.noise_std, size=base.shape)
    return base


# Spikes arrive as short events rather than isolated points; contiguous
# anomalous mass is what the anomaly-upweighted forecast loss protects.
EVENT_LEN = 2


def gen_synthetic(config: SynthConfig, name: str = "synth") -> RawSeries:
    """Generate one precursor-anomaly series, deterministic per seed.

    Anomalies are spikes on channel 0, arriving as EVENT_LEN-step events.
    Every labeled timestep t is preceded by a linear ramp on channel 1
    occupying [t - precursor_lead, t), so the ramp starts exactly
    precursor_lead steps before its spike and an anomaly is predictable from
    context that ends anywhere inside the ramp. The ramp peaks at twice the
    spike height (in channel-1 std units); its progress inside a context
    window then dominates window similarity, which is what lets
    nearest-neighbor retrieval line anomalous horizons up by offset.
    """
    rng = np.random.default_rng(config.seed)
    values = _base_signal(config, rng)
    t_len = config.length
    lead = config.precursor_lead

    n_events = max(1, int(round(config.anomaly_rate * t_len / EVENT_LEN)))
    candidates = np.arange(lead, max(lead + 1, t_len - EVENT_LEN + 1))
    n_events = min(n_events, candidates.size)
    starts = np.sort(rng.choice(candidates, size=n_events, replace=False))

    labels = np.zeros(t_len, dtype=np.int64)
    spike_std = max(values[:, 0].std(), EPS_NORM)
    ramp_amp = 2.0 * config.spike_magnitude * max(values[:, 1].std(), EPS_NORM)
    ramp = ramp_amp * np.linspace(1.0 / lead, 1.0, lead)
    for start in starts:
        for pos in range(start, min(start + EVENT_LEN, t_len)):
            values[pos, 0] += config.spike_magnitude * spike_std
            values[pos - lead : pos, 1] += ramp
            labels[pos] = 1
    return RawSeries(values=values, labels=labels, name=name)


def read_series_csv(path) -> RawSeries:
    """Read a labeled series CSV: header row, channel columns, final Label column."""
    import os

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if len(header) < 2 or header[-1].strip().lower() != "label":
            raise ValueError(
                f"{path}: last header column must be 'Label' (case-insensitive), got {header[-1]!r}"
            )
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    if data.shape[1] != len(header):
        raise DimensionError(f"{path}: row width {data.shape[1]} does not match header width {len(header)}")
    values = data[:, :-1]
    labels = data[:, -1]
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError(f"{path}: Label column must contain only 0/1")
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return RawSeries(values=values, labels=labels.astype(np.int64), name=name)


def write_series_csv(series: RawSeries, path) -> None:
    """Write a series in the same CSV layout read_series_csv expects."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        cols = [f"ch{i}" for i in range(series.n_channels)] + ["Label"]
        fh.write(",".join(cols) + "\n")
        for i in range(series.length):
            vals = ",".join(repr(float(v)) for v in series.values[i])
            fh.write(f"{vals},{int(series.labels[i])}\n")
