"""Retrieval database: (embedding, true horizon) triplets with exact l2 k-NN.

Stores are flat arrays scanned exhaustively per query. At desk scale
(<= 1e5 records) this is fast, exact, and trivially oracle-testable;
ties are broken by ascending record index so results are deterministic
across platforms.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dataset import WindowSample
from .errors import DimensionError, FormatError
from .forecaster import Embedding

STORE_MAGIC = b"F2AR"
STORE_VERSION = 1


@dataclass(frozen=True)
class RetrievalStore:
    embeddings: np.ndarray  # (N, C*D)
    horizons: np.ndarray  # (N, H, C)
    names: tuple[str, ...]
    starts: np.ndarray  # (N,)
    c: int
    d: int
    h: int

    def __len__(self) -> int:
        return self.embeddings.shape[0]


@dataclass
class RetrievedSet:
    horizons: np.ndarray  # (k, H, C)
    distances: np.ndarray  # (k,) ascending
    indices: np.ndarray  # (k,) store record indices


def build_store(samples: list[WindowSample], forecaster) -> RetrievalStore:
    """One record per sample, in input order: embedding of x plus the true horizon z."""
    if not samples:
        raise ValueError("cannot build a retrieval store from zero samples")
    h, c = samples[0].z.shape
    embs = []
    hors = np.empty((len(samples), h, c), dtype=np.float64)
    names = []
    starts = np.empty(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        if s.z.shape != (h, c):
            raise DimensionError(f"sample {s.origin}: horizon shape {s.z.shape} != ({h}, {c})")
        emb, _ = forecaster.forecast_parts(s.x, origin=s.origin)
        embs.append(emb.flat)
        hors[i] = s.z
        names.append(s.origin[0])
        starts[i] = s.origin[1]
    emb_mat = np.stack(embs)
    d = emb_mat.shape[1] // c
    if d * c != emb_mat.shape[1]:
        raise DimensionError(f"embedding length {emb_mat.shape[1]} is not divisible by C={c}")
    return RetrievalStore(
        embeddings=emb_mat, horizons=hors, names=tuple(names), starts=starts, c=c, d=d, h=h
    )


def query(store: RetrievalStore, e: Embedding | np.ndarray, k: int) -> RetrievedSet:
    """Exact k nearest records under l2 distance, ties by ascending record index."""
    if k < 1:
        raise ValueError("k must be >= 1 (k=0 bypasses retrieval entirely)")
    n = len(store)
    if k > n:
        raise ValueError(f"k={k} exceeds store size {n}")
    flat = e.flat if isinstance(e, Embedding) else np.asarray(e, dtype=np.float64).reshape(-1)
    if flat.shape[0] != store.embeddings.shape[1]:
        raise DimensionError(
            f"query embedding length {flat.shape[0]} != store record length {store.embeddings.shape[1]}"
        )
    diff = store.embeddings - flat[None, :]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    order = np.argsort(dist, kind="stable")[:k]
    return RetrievedSet(horizons=store.horizons[order].copy(), distances=dist[order].copy(), indices=order)


def save_store(store: RetrievalStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", STORE_MAGIC, STORE_VERSION))
        fh.write(struct.pack("<IIIQ", store.c, store.d, store.h, len(store)))
        for i in range(len(store)):
            fh.write(np.ascontiguousarray(store.embeddings[i], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(store.horizons[i], dtype="<f8").tobytes())
            raw = store.names[i].encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", int(store.starts[i])))


def _read_exact(fh, n: int, path, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"{path}: truncated file while reading {what} ({len(buf)}/{n} bytes)")
    return buf


def load_store(path, expect_dims: tuple[int, int, int] | None = None) -> RetrievalStore:
    """Load an F2AR file; ``expect_dims`` is (C, D, H) of the consuming run."""
    with open(path, "rb") as fh:
        magic, version = struct.unpack("<4sI", _read_exact(fh, 8, path, "header"))
        if magic != STORE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {STORE_MAGIC!r}")
        if version != STORE_VERSION:
            raise FormatError(f"{path}: unsupported version {version}, expected {STORE_VERSION}")
        c, d, h, count = struct.unpack("<IIIQ", _read_exact(fh, 20, path, "dims"))
        if expect_dims is not None and (c, d, h) != tuple(expect_dims):
            raise DimensionError(
                f"{path}: store dims (C={c}, D={d}, H={h}) do not match configured "
                f"(C={expect_dims[0]}, D={expect_dims[1]}, H={expect_dims[2]})"
            )
        embs = np.empty((count, c * d), dtype=np.float64)
        hors = np.empty((count, h, c), dtype=np.float64)
        names = []
        starts = np.empty(count, dtype=np.int64)
        for i in range(count):
            embs[i] = np.frombuffer(_read_exact(fh, 8 * c * d, path, f"record {i} embedding"), dtype="<f8")
            hors[i] = np.frombuffer(
                _read_exact(fh, 8 * h * c, path, f"record {i} horizon"), dtype="<f8"
            ).reshape(h, c)
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, path, f"record {i} name length"))
            names.append(_read_exact(fh, name_len, path, f"record {i} name").decode("utf-8"))
            (starts[i],) = struct.unpack("<Q", _read_exact(fh, 8, path, f"record {i} start"))
        trailing = fh.read(1)
        if trailing:
            raise FormatError(f"{path}: trailing bytes after {count} records")
    return RetrievalStore(embeddings=embs, horizons=hors, names=tuple(names), starts=starts, c=c, d=d, h=h)
