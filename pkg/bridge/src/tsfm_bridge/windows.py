"""CSV ingestion and window enumeration, mirrored from the engine's rules.

This is an independent implementation kept deliberately tiny: the engine and
the bridge must agree on the (series name, window start) key set for any CSV,
and that agreement is what the conformance tests check. Rules:

- CSV has a header row; the last column must be named ``Label``
  (case-insensitive); every other column is a channel.
- Windows start at 0, stride, 2*stride, ... and are emitted only when both
  the full L context and the full H horizon fit inside the series.
- The series name is the file name without its extension.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

EPS_STD = 1e-8


@dataclass
class SeriesData:
    name: str
    values: np.ndarray  # (T, C_raw), raw units


def read_csv(path) -> SeriesData:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if len(header) < 2 or header[-1].strip().lower() != "label":
            raise ValueError(f"{path}: last header column must be 'Label', got {header[-1]!r}")
        rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64)[:, :-1]
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return SeriesData(name=name, values=values)


def window_starts(t_len: int, l_ctx: int, h_horizon: int, stride: int) -> list[int]:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if l_ctx + h_horizon > t_len:
        raise ValueError(f"series too short: L + H = {l_ctx + h_horizon} exceeds T = {t_len}")
    return list(range(0, t_len - l_ctx - h_horizon + 1, stride))


def standardize_channels(values: np.ndarray, c_target: int) -> np.ndarray:
    """Truncate or zero-pad to ``c_target`` channels and z-score per channel.

    The bridge keeps raw channel order (no variance ranking); embeddings are
    opaque vectors to the engine, so only the channel COUNT must line up.
    Statistics use the whole series.
    """
    t_len, c_raw = values.shape
    out = np.zeros((t_len, c_target), dtype=np.float64)
    keep = min(c_raw, c_target)
    sel = values[:, :keep]
    std = np.maximum(sel.std(axis=0), EPS_STD)
    out[:, :keep] = (sel - sel.mean(axis=0)) / std
    return out
