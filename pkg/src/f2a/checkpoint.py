"""Model checkpoint serialization (magic F2AM, versioned, CRC-tailed)."""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError
from .forecaster import ForecasterParams
from .fusion import FusionParams

CHECKPOINT_MAGIC = b"F2AM"
CHECKPOINT_VERSION = 1

# Fixed array order: name -> shape builder given (L, C, D, H).
_ARRAYS = (
    ("W_enc", lambda l, c, d, h: (l, d)),
    ("b_enc", lambda l, c, d, h: (d,)),
    ("W_dec", lambda l, c, d, h: (d, h)),
    ("b_dec", lambda l, c, d, h: (h,)),
    ("Ws", lambda l, c, d, h: (h * c, h * c)),
    ("W1", lambda l, c, d, h: (c, 1)),
    ("W2", lambda l, c, d, h: (h * c, 1)),
    ("Wap", lambda l, c, d, h: (h * c, h)),
)


@dataclass
class TrainedModel:
    fparams: ForecasterParams | None
    fusion: FusionParams
    k: int

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(L, C, D, H)."""
        if self.fparams is None:
            raise ValueError("externally-forecast model has no stored forecaster dims")
        l_ctx = self.fparams.l_ctx
        d = self.fparams.d_embed
        h = self.fparams.h_horizon
        c = self.fusion.W1.shape[0]
        return l_ctx, c, d, h


def save_checkpoint(path, model: TrainedModel) -> None:
    """Write atomically: header, arrays in fixed order, trailing CRC32."""
    l_ctx, c, d, h = model.dims
    arrays = {
        "W_enc": model.fparams.W_enc,
        "b_enc": model.fparams.b_enc,
        "W_dec": model.fparams.W_dec,
        "b_dec": model.fparams.b_dec,
        "Ws": model.fusion.Ws,
        "W1": model.fusion.W1,
        "W2": model.fusion.W2,
        "Wap": model.fusion.Wap,
    }
    body = struct.pack("<4sI", CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    body += struct.pack("<5I", l_ctx, c, d, h, model.k)
    for name, shape_fn in _ARRAYS:
        arr = arrays[name]
        want = shape_fn(l_ctx, c, d, h)
        if arr.shape != want:
            raise DimensionError(f"checkpoint array {name}: shape {arr.shape} != {want}")
        body += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(body))
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(body)
    os.replace(tmp, path)


def load_checkpoint(path, expect_dims: tuple[int, int, int, int] | None = None) -> TrainedModel:
    """Load and CRC-verify a checkpoint; ``expect_dims`` is (L, C, D, H)."""
    with open(path, "rb") as fh:
        body = fh.read()
    if len(body) < 8 + 20 + 4:
        raise FormatError(f"{path}: truncated checkpoint ({len(body)} bytes)")
    magic, version = struct.unpack_from("<4sI", body, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}, expected {CHECKPOINT_VERSION}")
    l_ctx, c, d, h, k = struct.unpack_from("<5I", body, 8)
    if expect_dims is not None and (l_ctx, c, d, h) != tuple(expect_dims):
        raise DimensionError(
            f"{path}: checkpoint dims (L={l_ctx}, C={c}, D={d}, H={h}) do not match configured "
            f"(L={expect_dims[0]}, C={expect_dims[1]}, D={expect_dims[2]}, H={expect_dims[3]})"
        )
    (stored_crc,) = struct.unpack_from("<I", body, len(body) - 4)
    if zlib.crc32(body[:-4]) != stored_crc:
        raise FormatError(f"{path}: checksum mismatch, file is corrupt")

    offset = 8 + 20
    arrays = {}
    for name, shape_fn in _ARRAYS:
        shape = shape_fn(l_ctx, c, d, h)
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(body) - 4:
            raise FormatError(f"{path}: truncated while reading array {name}")
        arrays[name] = np.frombuffer(body[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(body) - 4:
        raise FormatError(f"{path}: {len(body) - 4 - offset} unexpected bytes before checksum")

    fparams = ForecasterParams(
        W_enc=arrays["W_enc"],
        b_enc=arrays["b_enc"],
        W_dec=arrays["W_dec"],
        b_dec=arrays["b_dec"],
        encoder_frozen=True,
    )
    fusion = FusionParams(W1=arrays["W1"], W2=arrays["W2"], Ws=arrays["Ws"], Wap=arrays["Wap"])
    return TrainedModel(fparams=fparams, fusion=fusion, k=k)
