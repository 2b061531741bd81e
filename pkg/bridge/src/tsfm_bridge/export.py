"""Batch export of per-window (embedding, forecast) records to F2AE files.

The writer is an independent implementation of the interchange layout:
little-endian, magic ``F2AE``, version u32, then u32 C, D, H and record
count; each record carries a u16-length UTF-8 series name, a u64 window
start, C*D embedding float64s (channel-major) and H*C forecast float64s
(time-major). All floats are written as 64-bit regardless of what the
backbone computes in.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .backbones import get_backbone
from .windows import read_csv, standardize_channels, window_starts

MAGIC = b"F2AE"
VERSION = 1


@dataclass
class BridgeJob:
    inputs: list[str]
    out_path: str
    backbone: str
    l_ctx: int
    h_horizon: int
    c: int
    d: int
    stride: int = 0  # 0 = use the horizon length, the engine's default

    def __post_init__(self) -> None:
        if not self.inputs:
            raise ValueError("no input CSV files")
        for dim, label in ((self.l_ctx, "L"), (self.h_horizon, "H"), (self.c, "C"), (self.d, "D")):
            if dim < 1:
                raise ValueError(f"{label} must be >= 1, got {dim}")
        if self.stride == 0:
            self.stride = self.h_horizon
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


@dataclass
class ExportReport:
    records: int = 0
    keys: list[tuple[str, int]] = field(default_factory=list)


def export(job: BridgeJob) -> ExportReport:
    """Run the backbone over every window of every input and write one F2AE file."""
    model = get_backbone(job.backbone, job.l_ctx, job.h_horizon, job.c, job.d)
    report = ExportReport()
    payload = bytearray()
    for path in job.inputs:
        series = read_csv(path)
        values = standardize_channels(series.values, job.c)
        for start in window_starts(values.shape[0], job.l_ctx, job.h_horizon, job.stride):
            x = values[start : start + job.l_ctx]
            emb = np.ascontiguousarray(model.embed(x), dtype="<f8")
            fc = np.ascontiguousarray(model.forecast(x), dtype="<f8")
            if emb.shape != (job.c, job.d):
                raise ValueError(
                    f"backbone {job.backbone!r} produced embedding {emb.shape}, "
                    f"job expects ({job.c}, {job.d})"
                )
            if fc.shape != (job.h_horizon, job.c):
                raise ValueError(
                    f"backbone {job.backbone!r} produced forecast {fc.shape}, "
                    f"job expects ({job.h_horizon}, {job.c})"
                )
            raw_name = series.name.encode("utf-8")
            payload += struct.pack("<H", len(raw_name))
            payload += raw_name
            payload += struct.pack("<Q", start)
            payload += emb.tobytes()
            payload += fc.tobytes()
            report.records += 1
            report.keys.append((series.name, start))
    with open(job.out_path, "wb") as fh:
        fh.write(struct.pack("<4sI", MAGIC, VERSION))
        fh.write(struct.pack("<IIII", job.c, job.d, job.h_horizon, report.records))
        fh.write(bytes(payload))
    return report
