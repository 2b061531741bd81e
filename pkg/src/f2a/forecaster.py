"""Base forecaster: a pluggable encoder/decoder whose encoder output doubles
as the retrieval embedding.

The built-in forecaster is deliberately small: one shared per-channel affine
map L -> D with a tanh squashing (so embeddings are bounded and l2 distances
stay scale-stable), and a shared affine decoder D -> H. Externally produced
embeddings and forecasts can be swapped in through the F2AE interchange file,
keyed by (series name, window start).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError

INTERCHANGE_MAGIC = b"F2AE"
INTERCHANGE_VERSION = 1


@dataclass
class ForecasterParams:
    """Trainable weights of the built-in encoder/decoder."""

    W_enc: np.ndarray  # (L, D)
    b_enc: np.ndarray  # (D,)
    W_dec: np.ndarray  # (D, H)
    b_dec: np.ndarray  # (H,)
    encoder_frozen: bool = False

    @property
    def l_ctx(self) -> int:
        return self.W_enc.shape[0]

    @property
    def d_embed(self) -> int:
        return self.W_enc.shape[1]

    @property
    def h_horizon(self) -> int:
        return self.W_dec.shape[1]


@dataclass
class Embedding:
    """Per-channel embedding e (C, D) and its channel-major flattening."""

    e: np.ndarray
    flat: np.ndarray

    @classmethod
    def from_matrix(cls, e: np.ndarray) -> "Embedding":
        e = np.ascontiguousarray(e, dtype=np.float64)
        return cls(e=e, flat=e.reshape(-1))


def init_forecaster_params(l_ctx: int, d_embed: int, h_horizon: int, rng: np.random.Generator) -> ForecasterParams:
    be = 1.0 / np.sqrt(l_ctx)
    bd = 1.0 / np.sqrt(d_embed)
    return ForecasterParams(
        W_enc=rng.uniform(-be, be, size=(l_ctx, d_embed)),
        b_enc=np.zeros(d_embed),
        W_dec=rng.uniform(-bd, bd, size=(d_embed, h_horizon)),
        b_dec=np.zeros(h_horizon),
    )


def encode(x: np.ndarray, params: ForecasterParams) -> Embedding:
    """Embed each channel: e_c = tanh(x_c^T W_enc + b_enc)."""
    if x.ndim != 2 or x.shape[0] != params.l_ctx:
        raise DimensionError(f"encode: expected x of shape ({params.l_ctx}, C), got {x.shape}")
    e = np.tanh(x.T @ params.W_enc + params.b_enc)
    return Embedding.from_matrix(e)


def decode(e: Embedding | np.ndarray, params: ForecasterParams) -> np.ndarray:
    """Forecast each channel from its embedding row: x_hat[:, c] = e_c W_dec + b_dec."""
    mat = e.e if isinstance(e, Embedding) else np.asarray(e, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != params.d_embed:
        raise DimensionError(f"decode: expected embedding (C, {params.d_embed}), got {mat.shape}")
    return (mat @ params.W_dec).T + params.b_dec[:, None]


def encoder_checksum(params: ForecasterParams) -> int:
    """CRC32 over encoder weights; used to verify the freeze contract."""
    return zlib.crc32(params.W_enc.tobytes() + params.b_enc.tobytes())


class BuiltinForecaster:
    """Wraps ForecasterParams behind the pluggable forecast interface."""

    def __init__(self, params: ForecasterParams):
        self.params = params

    def forecast_parts(self, x: np.ndarray, origin: tuple[str, int] | None = None):
        emb = encode(x, self.params)
        return emb, decode(emb, self.params)


class ExternalForecaster:
    """Serves embeddings and forecasts from an interchange file by window key."""

    def __init__(self, table: dict[tuple[str, int], tuple[Embedding, np.ndarray]]):
        self.table = table

    def forecast_parts(self, x: np.ndarray, origin: tuple[str, int] | None = None):
        if origin is None:
            raise ValueError("external forecaster needs the window origin (series name, start)")
        key = (origin[0], int(origin[1]))
        if key not in self.table:
            raise KeyError(f"external forecaster has no record for window {key}")
        return self.table[key]


def _read_exact(fh, n: int, path, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"{path}: truncated file while reading {what} ({len(buf)}/{n} bytes)")
    return buf


def save_external(path, records, c: int, d: int, h: int) -> None:
    """Write an F2AE interchange file.

    ``records`` yields (series name, start index, embedding (C, D), forecast
    (H, C)) tuples. All floats are little-endian 64-bit.
    """
    records = list(records)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", INTERCHANGE_MAGIC, INTERCHANGE_VERSION))
        fh.write(struct.pack("<IIII", c, d, h, len(records)))
        for name, start, emb, fc in records:
            mat = emb.e if isinstance(emb, Embedding) else np.asarray(emb, dtype=np.float64)
            if mat.shape != (c, d):
                raise DimensionError(f"record {name!r}@{start}: embedding shape {mat.shape} != ({c}, {d})")
            fc = np.asarray(fc, dtype=np.float64)
            if fc.shape != (h, c):
                raise DimensionError(f"record {name!r}@{start}: forecast shape {fc.shape} != ({h}, {c})")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", int(start)))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(fc, dtype="<f8").tobytes())


def load_external(path, expect_dims: tuple[int, int, int] | None = None):
    """Load an F2AE interchange file into {(name, start): (Embedding, forecast)}.

    ``expect_dims`` is (C, D, H); a mismatch raises DimensionError naming both
    values. A valid header with zero records is fine.
    """
    with open(path, "rb") as fh:
        magic, version = struct.unpack("<4sI", _read_exact(fh, 8, path, "header"))
        if magic != INTERCHANGE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {INTERCHANGE_MAGIC!r}")
        if version != INTERCHANGE_VERSION:
            raise FormatError(f"{path}: unsupported version {version}, expected {INTERCHANGE_VERSION}")
        c, d, h, count = struct.unpack("<IIII", _read_exact(fh, 16, path, "dims"))
        if expect_dims is not None and (c, d, h) != tuple(expect_dims):
            raise DimensionError(
                f"{path}: file dims (C={c}, D={d}, H={h}) do not match configured "
                f"(C={expect_dims[0]}, D={expect_dims[1]}, H={expect_dims[2]})"
            )
        table: dict[tuple[str, int], tuple[Embedding, np.ndarray]] = {}
        for i in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, path, f"record {i} name length"))
            name = _read_exact(fh, name_len, path, f"record {i} name").decode("utf-8")
            (start,) = struct.unpack("<Q", _read_exact(fh, 8, path, f"record {i} start"))
            emb = np.frombuffer(_read_exact(fh, 8 * c * d, path, f"record {i} embedding"), dtype="<f8")
            fc = np.frombuffer(_read_exact(fh, 8 * h * c, path, f"record {i} forecast"), dtype="<f8")
            table[(name, int(start))] = (
                Embedding.from_matrix(emb.reshape(c, d)),
                fc.reshape(h, c).copy(),
            )
        trailing = fh.read(1)
        if trailing:
            raise FormatError(f"{path}: trailing bytes after {count} records")
    return table
